#include "hybridtrap/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>

#include <omp.h>

#include "hybridtrap/errors.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + '"';
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    return f;
}

void write_outputs(const SweepSpec& spec, const SweepResult& result) {
    if (spec.output.empty()) return;
    write_trials_csv(spec.output + "_trials.csv", result);
    write_summary_csv(spec.output + "_summary.csv", result);
}

}  // namespace

std::string to_string(SweepParameter p) {
    switch (p) {
        case SweepParameter::pressure: return "pressure";
        case SweepParameter::offset_x: return "offset_x";
        case SweepParameter::gain: return "gain";
    }
    return "unknown";
}

SweepParameter sweep_parameter_from_string(const std::string& name) {
    if (name == "pressure") return SweepParameter::pressure;
    if (name == "offset_x" || name == "alignment") return SweepParameter::offset_x;
    if (name == "gain") return SweepParameter::gain;
    throw ValidationError("unknown sweep parameter '" + name + "' (pressure | offset_x | gain)");
}

std::string value_header(SweepParameter p) {
    switch (p) {
        case SweepParameter::pressure: return "pressure[mbar]";
        case SweepParameter::offset_x: return "offset_x[nm]";
        case SweepParameter::gain: return "gain[x]";
    }
    return "value";
}

ExperimentConfig apply_sweep_value(const ExperimentConfig& base, SweepParameter p, double value) {
    ExperimentConfig out = base;
    switch (p) {
        case SweepParameter::pressure: out.sim.environment.pressure = units::mbar(value); break;
        case SweepParameter::offset_x: out.sim.paul.trap_offset.x = value * 1e-9; break;
        case SweepParameter::gain:
            out.sim.feedback.paul_gain *= value;
            out.sim.feedback.optical_gain *= value;
            break;
    }
    return out;
}

void validate_sweep(const SweepSpec& spec) {
    std::vector<std::string> problems;
    if (spec.trials < 1) problems.push_back("trials must be >= 1");
    if (spec.values.empty()) problems.push_back("sweep needs at least one value");
    for (double v : spec.values) {
        if (!std::isfinite(v)) {
            problems.push_back("sweep values must be finite");
            break;
        }
    }
    if (!problems.empty()) throw ValidationError(problems);
    for (double v : spec.values) {
        const ExperimentConfig cfg = apply_sweep_value(spec.base, spec.parameter, v);
        try {
            (void)validate_config(cfg.sim);
        } catch (const ValidationError& e) {
            std::vector<std::string> msgs;
            for (const auto& m : e.problems()) msgs.push_back(to_string(spec.parameter) + "=" + fmt(v) + ": " + m);
            throw ValidationError(msgs);
        }
    }
}

TrialRecord run_trial(const SweepSpec& spec, std::size_t point, int trial) {
    const double value = spec.values.at(point);
    const ExperimentConfig cfg = apply_sweep_value(spec.base, spec.parameter, value);
    TrialRecord rec;
    rec.point = point;
    rec.value = value;
    rec.trial = trial;
    rec.index = trial_index(point, trial, spec.trials);
    Simulation sim(cfg.sim, rec.index);
    prepare_precooled(sim, spec.feedback);
    const TransferOutcome o = transfer_attempt(sim, cfg.protocol, spec.feedback, false);
    rec.success = o.success;
    rec.spectral_success = o.spectral_success;
    rec.diverged = o.diverged;
    rec.occupancy = o.occupancy;
    rec.pre_paul_power = o.pre.paul_power;
    rec.post_paul_power = o.post.paul_power;
    rec.post_optical_power = o.post.optical_power;
    rec.paul_peak_ratio = o.post.paul_peak.ratio();
    rec.optical_peak_ratio = o.post.optical_peak.ratio();
    rec.rms_before = o.rms_before;
    rec.error = o.error;
    return rec;
}

Interval wilson_interval(int successes, int trials, double z) {
    if (trials <= 0) return {0.0, 1.0};
    const double n = trials;
    const double k = successes;
    const double z2 = z * z;
    const double centre = (k + 0.5 * z2) / (n + z2);
    const double half = z * std::sqrt(k * (n - k) / n + 0.25 * z2) / (n + z2);
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

std::vector<PointSummary> summarise(const SweepSpec& spec, const std::vector<TrialRecord>& trials) {
    std::vector<PointSummary> points(spec.values.size());
    for (std::size_t i = 0; i < points.size(); ++i) points[i].value = spec.values[i];
    for (const auto& t : trials) {
        auto& p = points.at(t.point);
        ++p.trials;
        p.successes += t.success ? 1 : 0;
        p.diverged += t.diverged ? 1 : 0;
    }
    for (auto& p : points) {
        p.rate = p.trials > 0 ? static_cast<double>(p.successes) / p.trials : 0.0;
        p.ci = wilson_interval(p.successes, p.trials);
    }
    return points;
}

SweepResult run_sweep_serial(const SweepSpec& spec) {
    validate_sweep(spec);
    SweepResult result;
    result.parameter = spec.parameter;
    result.trials.reserve(spec.values.size() * static_cast<std::size_t>(spec.trials));
    for (std::size_t p = 0; p < spec.values.size(); ++p) {
        for (int t = 0; t < spec.trials; ++t) result.trials.push_back(run_trial(spec, p, t));
    }
    result.points = summarise(spec, result.trials);
    return result;
}

SweepResult run_sweep_parallel(const SweepSpec& spec, int threads) {
    validate_sweep(spec);
    const auto trials = static_cast<long>(spec.trials);
    const long total = static_cast<long>(spec.values.size()) * trials;
    SweepResult result;
    result.parameter = spec.parameter;
    result.trials.resize(static_cast<std::size_t>(total));
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, threads))
    for (long i = 0; i < total; ++i) {
        try {
            result.trials[static_cast<std::size_t>(i)] =
                run_trial(spec, static_cast<std::size_t>(i / trials), static_cast<int>(i % trials));
        } catch (...) {
#pragma omp critical(hybridtrap_sweep_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    result.points = summarise(spec, result.trials);
    return result;
}

SweepResult run_sweep(const SweepSpec& spec, int threads) {
    SweepResult result = threads <= 1 ? run_sweep_serial(spec) : run_sweep_parallel(spec, threads);
    write_outputs(spec, result);
    return result;
}

int default_parallelism() {
    if (const char* env = std::getenv("HYBRIDTRAP_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
    }
    return omp_get_max_threads();
}

void write_trials_csv(const SweepResult& result, std::ostream& out) {
    out << value_header(result.parameter)
        << ",point,trial,trial_index,success,spectral_success,occupancy,diverged,pre_paul_power[V^2],"
           "post_paul_power[V^2],post_optical_power[V^2],paul_peak_ratio,optical_peak_ratio,rms_before[nm],error\n";
    for (const auto& t : result.trials) {
        out << fmt(t.value) << ',' << t.point << ',' << t.trial << ',' << t.index << ',' << (t.success ? 1 : 0) << ','
            << (t.spectral_success ? 1 : 0) << ',' << to_string(t.occupancy) << ',' << (t.diverged ? 1 : 0) << ','
            << fmt(t.pre_paul_power) << ',' << fmt(t.post_paul_power) << ',' << fmt(t.post_optical_power) << ','
            << fmt(t.paul_peak_ratio) << ',' << fmt(t.optical_peak_ratio) << ',' << fmt(t.rms_before * 1e9) << ','
            << csv_escape(t.error) << '\n';
    }
}

void write_summary_csv(const SweepResult& result, std::ostream& out) {
    out << value_header(result.parameter) << ",trials,successes,diverged,rate,ci_lo,ci_hi\n";
    for (const auto& p : result.points) {
        out << fmt(p.value) << ',' << p.trials << ',' << p.successes << ',' << p.diverged << ',' << fmt(p.rate) << ','
            << fmt(p.ci.lo) << ',' << fmt(p.ci.hi) << '\n';
    }
}

void write_trials_csv(const std::string& path, const SweepResult& result) {
    auto f = open_out(path);
    write_trials_csv(result, f);
}

void write_summary_csv(const std::string& path, const SweepResult& result) {
    auto f = open_out(path);
    write_summary_csv(result, f);
}

std::vector<double> log_grid(double lo, double hi, int n) {
    if (n < 1 || !(lo > 0.0) || !(hi > 0.0)) throw ValidationError("log_grid needs n >= 1 and positive bounds");
    if (n == 1) return {lo};
    std::vector<double> out(static_cast<std::size_t>(n));
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (n - 1));
    out.back() = hi;
    return out;
}

std::vector<double> linear_grid(double lo, double hi, int n) {
    if (n < 1) throw ValidationError("linear_grid needs n >= 1");
    if (n == 1) return {lo};
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    out.back() = hi;
    return out;
}

}  // namespace hybridtrap
