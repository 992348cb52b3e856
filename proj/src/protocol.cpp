#include "hybridtrap/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "hybridtrap/control.hpp"
#include "hybridtrap/errors.hpp"
#include "hybridtrap/fields.hpp"
#include "hybridtrap/sensing.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

namespace {

constexpr double calibration_pressure = units::mbar(1.0);
constexpr double calibration_duration = 2.0;  // s
constexpr double settle_time = 5e-3;          // s after each stage move
constexpr double field_map_radius = 100e-6;   // m
constexpr double align_coarse_half_span = 1.2e-6;
constexpr double align_coarse_step = 0.2e-6;
constexpr double align_fine_step = 100e-9;
constexpr int align_fine_half = 4;

double mean(std::span<const double> v) {
    double m = 0.0;
    for (double a : v) m += a;
    return v.empty() ? 0.0 : m / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
    if (v.empty()) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double a : v) s += (a - m) * (a - m);
    return s / static_cast<double>(v.size());
}

double rms(std::span<const double> v) { return std::sqrt(variance(v)); }

SpectralSummary summarise(const Psd& psd, const ProtocolConfig& cfg) {
    SpectralSummary s;
    s.paul_power = band_power(psd, cfg.paul_band.lo, cfg.paul_band.hi);
    s.optical_power = band_power(psd, cfg.optical_band.lo, cfg.optical_band.hi);
    s.paul_peak = band_peak(psd, cfg.paul_band.lo, cfg.paul_band.hi);
    s.optical_peak = band_peak(psd, cfg.optical_band.lo, cfg.optical_band.hi);
    return s;
}

Occupancy classify(const TimeTrace& window, const SimConfig& cfg) {
    const auto x = window.channel("x");
    const auto y = window.channel("y");
    const auto z = window.channel("z");
    const Vec3 centre = cfg.paul.trap_offset;
    const double r0 = cfg.paul.tip_distance;
    const double z0 = cfg.paul.endcap_distance;
    OpticalTrapConfig optical = cfg.optical;
    optical.enabled = true;
    const double inside = -optical.depth * std::exp(-2.0);
    bool in_well = cfg.optical.enabled;
    const std::size_t tail = window.size() - window.size() / 5;
    for (std::size_t i = 0; i < window.size(); ++i) {
        const Vec3 r{x[i], y[i], z[i]};
        const Vec3 d = r - centre;
        if (!is_finite(r) || std::hypot(d.x, d.y) > r0 || std::abs(d.z) > z0) return Occupancy::lost;
        if (i >= tail && in_well && optical_potential(r, optical) > inside) in_well = false;
    }
    return in_well ? Occupancy::optical : Occupancy::paul;
}

DemodResult lock_in(const TimeTrace& tr, const std::string& channel, double f, double bw) {
    return demodulate(tr.channel(channel), tr.sample_rate(), f, bw, tr.start_time());
}

double measure_duration(const ProtocolConfig& cfg) { return std::max(cfg.compensation_measure, 5.5 / cfg.demod_bandwidth); }

// Least-squares parabola through (x_i, y_i); returns the vertex, or NaN when not a maximum/minimum
// of the requested kind.
double parabola_vertex(const std::vector<double>& xs, const std::vector<double>& ys, bool maximum) {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(xs.size()), 3);
    Eigen::VectorXd b(static_cast<Eigen::Index>(xs.size()));
    const double x0 = xs[xs.size() / 2];
    double scale = 0.0;
    for (double x : xs) scale = std::max(scale, std::abs(x - x0));
    if (scale == 0.0) scale = 1.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double u = (xs[i] - x0) / scale;
        a(static_cast<Eigen::Index>(i), 0) = u * u;
        a(static_cast<Eigen::Index>(i), 1) = u;
        a(static_cast<Eigen::Index>(i), 2) = 1.0;
        b(static_cast<Eigen::Index>(i)) = ys[i];
    }
    const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
    if (maximum ? !(c(0) < 0.0) : !(c(0) > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return x0 - scale * c(1) / (2.0 * c(0));
}

// Restores the switchable parts of a simulation on scope exit.
class SettingsGuard {
public:
    explicit SettingsGuard(Simulation& sim)
        : sim_(sim),
          pressure_(sim.config().environment.pressure),
          paul_(sim.config().paul.enabled),
          optical_(sim.config().optical.enabled),
          rf_(sim.config().paul.rf_amplitude),
          endcap_(sim.config().paul.endcap_voltage),
          dc_offset_(sim.config().paul.dc_offset),
          schedule_(sim.config().feedback.schedule) {}
    SettingsGuard(const SettingsGuard&) = delete;
    SettingsGuard& operator=(const SettingsGuard&) = delete;
    [[nodiscard]] double pressure() const noexcept { return pressure_; }
    ~SettingsGuard() {
        sim_.set_drive(std::nullopt);
        sim_.set_pressure(pressure_);
        sim_.set_paul_enabled(paul_);
        sim_.set_optical_enabled(optical_);
        sim_.set_rf_amplitude(rf_);
        sim_.set_dc_voltages(endcap_, dc_offset_);
        if (sim_.config().feedback.schedule != schedule_) sim_.set_schedule(schedule_);
    }

private:
    Simulation& sim_;
    double pressure_;
    bool paul_;
    bool optical_;
    double rf_;
    double endcap_;
    double dc_offset_;
    Schedule schedule_;
};

void check_stage(const std::vector<double>& values, double range, const char* axis) {
    for (double v : values) {
        if (!std::isfinite(v) || std::abs(v) > range) {
            throw ValidationError(std::string("grid ") + axis + " value outside the stage range of +-" +
                                  std::to_string(range * 1e6) + " um");
        }
    }
}

void move_and_settle(Simulation& sim, const Vec3& target, const ProtocolConfig& cfg) {
    sim.move_trap(target, cfg.stage_ramp);
    sim.advance(cfg.stage_ramp + settle_time);
}

}  // namespace

std::string to_string(Occupancy o) {
    switch (o) {
        case Occupancy::optical: return "optical";
        case Occupancy::paul: return "paul";
        case Occupancy::lost: return "lost";
    }
    return "unknown";
}

SuccessEvaluation evaluate_success(const TimeTrace& window, const ProtocolConfig& cfg, const std::string& channel) {
    const std::size_t seg = segment_samples(cfg.segment_duration, window.sample_rate());
    if (window.size() < seg) {
        throw ValidationError("evaluation window of " + std::to_string(window.size()) + " samples is shorter than one " +
                              std::to_string(seg) + "-sample segment");
    }
    const Psd psd = welch_psd(window.channel(channel), window.sample_rate(), seg);
    SuccessEvaluation out;
    out.spectrum = summarise(psd, cfg);
    out.success = out.spectrum.optical_peak.ratio() >= cfg.optical_peak_threshold &&
                  out.spectrum.paul_peak.ratio() < cfg.paul_peak_threshold;
    return out;
}

Vec3 precool_temperatures(const SimConfig& input, bool feedback) {
    const SimConfig cfg = validate_config(input).config;
    const double t = cfg.environment.gas_temperature;
    if (!feedback) return {t, t, t};
    const auto particle = derive_particle_properties(cfg.particle);
    const double gamma = gas_damping_rate(cfg.environment, cfg.particle);
    const Vec3 w = secular_frequencies(cfg.paul, particle);
    const double r2 = 1.0 / std::sqrt(2.0);
    const double rate = 1.0 / cfg.dt;
    const std::array<Vec3, 3> dirs{Vec3{r2, r2, 0.0}, Vec3{-r2, r2, 0.0}, Vec3{0.0, 0.0, 1.0}};
    Vec3 out;
    for (int k = 0; k < 3; ++k) {
        const double g_fb =
            feedback_damping_rate(cfg.feedback, Schedule::paul, dirs[static_cast<std::size_t>(k)], w[k], particle.mass, rate);
        const double total = gamma + g_fb;
        out[k] = total > 0.0 ? t * gamma / total : t;
    }
    return out;
}

void prepare_precooled(Simulation& sim, bool feedback) {
    sim.set_optical_enabled(false);
    sim.set_paul_enabled(true);
    sim.set_schedule(feedback ? Schedule::paul : Schedule::off);
    sim.thermalize_in_paul_trap(precool_temperatures(sim.config(), feedback));
}

TransferOutcome transfer_attempt(Simulation& sim, const ProtocolConfig& cfg, bool feedback, bool keep_trace) {
    if (!(cfg.pre_duration > 0.0) || !(cfg.feedback_delay > 0.0) || !(cfg.evaluation_delay > 0.0) ||
        !(cfg.evaluation_window > 0.0)) {
        throw ValidationError("protocol durations must be > 0");
    }
    TransferOutcome out;
    const double t0 = sim.time() + cfg.pre_duration;
    auto log = [&](const char* name) { out.steps.push_back({name, sim.time() - t0}); };
    try {
        TimeTrace pre = sim.run(cfg.pre_duration);
        out.rms_before = rms(pre.channel("x"));
        out.pre = evaluate_success(pre, cfg).spectrum;

        log("i: paul-schedule feedback off");
        sim.set_schedule(Schedule::off);
        log("ii: optical trap on");
        sim.set_optical_enabled(true);
        TimeTrace a = sim.run(cfg.feedback_delay);
        if (feedback) {
            log("iii: optical-schedule feedback on");
            sim.set_schedule(Schedule::optical);
        }
        TimeTrace b = sim.run(cfg.evaluation_delay);
        log("iv: evaluation window");
        TimeTrace window = sim.run(cfg.evaluation_window);
        log("end");

        const SuccessEvaluation eval = evaluate_success(window, cfg);
        out.post = eval.spectrum;
        out.spectral_success = eval.success;
        out.occupancy = classify(window, sim.config());
        out.success = out.spectral_success && out.occupancy == Occupancy::optical;
        if (keep_trace) {
            pre.extend(a);
            pre.extend(b);
            pre.extend(window);
            pre.set_start_time(pre.start_time() - t0);
            out.trace = std::move(pre);
        }
    } catch (const IntegrationError& e) {
        out.diverged = true;
        out.error = e.what();
        out.occupancy = Occupancy::lost;
        out.success = false;
    }
    return out;
}

double micromotion_amplitude(Simulation& sim, const ProtocolConfig& cfg) {
    const TimeTrace tr = sim.run(measure_duration(cfg));
    const double f = sim.config().paul.drive_frequency / units::two_pi;
    const double ax = lock_in(tr, "qpd_x", f, cfg.demod_bandwidth).amplitude;
    const double ay = lock_in(tr, "qpd_y", f, cfg.demod_bandwidth).amplitude;
    return std::hypot(ax, ay);
}

Vec3 compensate_stray_fields(Simulation& sim, const ProtocolConfig& cfg) {
    if (!sim.config().paul.enabled) throw ValidationError("compensate_stray_fields: Paul trap is off");
    if (cfg.compensation_iterations < 1 || !(cfg.compensation_step > 0.0)) {
        throw ValidationError("compensation needs >= 1 iteration and a positive step");
    }
    SettingsGuard guard(sim);
    const double clamp = sim.config().feedback.voltage_clamp;
    const DriveTone endcap_tone{Electrode::endcap, cfg.endcap_tone_amplitude, cfg.tone_frequency, 0.0};

    auto metric = [&](int axis, const Vec3& v) {
        sim.set_shim_voltage(v);
        if (axis < 2) {
            sim.set_drive(std::nullopt);
            const double a = micromotion_amplitude(sim, cfg);
            return a * a;
        }
        sim.set_drive(endcap_tone);
        const TimeTrace tr = sim.run(measure_duration(cfg));
        const double a = lock_in(tr, "qpd_z", cfg.tone_frequency, cfg.demod_bandwidth).amplitude;
        return a * a;
    };

    Vec3 v = sim.config().paul.shim_voltage;
    Vec3 last_change{};
    double h = cfg.compensation_step;
    for (int it = 0; it < cfg.compensation_iterations; ++it, h *= 0.5) {
        for (int axis = 0; axis < 3; ++axis) {
            const double v0 = v[axis];
            Vec3 probe = v;
            probe[axis] = v0 - h;
            const double m_lo = metric(axis, probe);
            probe[axis] = v0 + h;
            const double m_hi = metric(axis, probe);
            const double m_0 = metric(axis, v);
            const double curvature = m_hi - 2.0 * m_0 + m_lo;
            double next = curvature > 0.0 ? v0 - h * (m_hi - m_lo) / (2.0 * curvature) : (m_hi < m_lo ? v0 + h : v0 - h);
            next = std::clamp(next, -clamp, clamp);
            last_change[axis] = next - v0;
            v[axis] = next;
        }
    }
    sim.set_shim_voltage(v);
    const double worst = std::max({std::abs(last_change.x), std::abs(last_change.y), std::abs(last_change.z)});
    if (!(worst < cfg.compensation_step)) {
        throw AnalysisError("stray-field compensation did not converge: last correction " + std::to_string(worst) + " V");
    }
    return v;
}

Vec3 align_traps(Simulation& sim, const ProtocolConfig& cfg) {
    if (!sim.config().paul.enabled) throw ValidationError("align_traps: Paul trap is off");
    SettingsGuard guard(sim);
    const Vec3 start = sim.trap_offset();
    Vec3 best = start;
    const std::array<const char*, 3> channels{"qpd_x", "qpd_y", "qpd_z"};
    const double noise = sim.config().detector.noise_floor * std::sqrt(cfg.demod_bandwidth);

    auto response = [&](int axis, double position) {
        Vec3 target = best;
        target[axis] = position;
        move_and_settle(sim, target, cfg);
        const TimeTrace tr = sim.run(measure_duration(cfg));
        return lock_in(tr, channels[static_cast<std::size_t>(axis)], cfg.tone_frequency, cfg.demod_bandwidth).amplitude;
    };

    for (int axis = 0; axis < 3; ++axis) {
        sim.set_drive(DriveTone{static_cast<Electrode>(axis), cfg.tone_amplitude, cfg.tone_frequency, 0.0});
        const double centre = start[axis];
        double peak_pos = centre;
        double peak = -1.0;
        const int half = static_cast<int>(std::lround(align_coarse_half_span / align_coarse_step));
        for (int i = -half; i <= half; ++i) {
            const double p = centre + i * align_coarse_step;
            if (std::abs(p) > cfg.stage_range) continue;
            const double a = response(axis, p);
            if (a > peak) {
                peak = a;
                peak_pos = p;
            }
        }
        if (!(peak > 5.0 * noise)) {
            throw AnalysisError("align_traps: no detectable response along axis " + std::to_string(axis));
        }
        // The response is flat near its maximum, so the parabola is fitted over a wide window
        // and the window is re-centred once on the first vertex.
        double centre_fine = peak_pos;
        for (int pass = 0; pass < 2; ++pass) {
            std::vector<double> xs;
            std::vector<double> ys;
            for (int i = -align_fine_half; i <= align_fine_half; ++i) {
                const double p = centre_fine + i * align_fine_step;
                if (std::abs(p) > cfg.stage_range) continue;
                xs.push_back(p);
                ys.push_back(response(axis, p));
            }
            double vertex = xs.size() >= 3 ? parabola_vertex(xs, ys, true) : centre_fine;
            if (!std::isfinite(vertex)) vertex = centre_fine;
            centre_fine = std::clamp(vertex, xs.front(), xs.back());
        }
        best[axis] = centre_fine;
        sim.set_drive(std::nullopt);
    }
    move_and_settle(sim, best, cfg);
    return start - best;
}

double recover_after_failure(Simulation& sim, const ProtocolConfig& cfg) {
    const double gamma = sim.damping_rate();
    if (!(gamma > 0.0)) throw ValidationError("recover_after_failure: needs gas damping (pressure > 0)");
    if (!(cfg.recovery_chunk > 0.0)) throw ValidationError("recovery_chunk must be > 0");
    sim.set_optical_enabled(false);
    sim.set_schedule(Schedule::off);
    const double timeout = cfg.recovery_timeout / gamma;
    const double fs = sim.config().sample_rate;
    const std::size_t seg = std::min(segment_samples(cfg.segment_duration, fs), segment_samples(cfg.recovery_chunk, fs));
    double elapsed = 0.0;
    while (elapsed < timeout) {
        const TimeTrace tr = sim.run(cfg.recovery_chunk);
        elapsed += cfg.recovery_chunk;
        const auto& s = sim.state();
        const Vec3 d = s.position - sim.trap_offset();
        if (std::hypot(d.x, d.y) > sim.config().paul.tip_distance || std::abs(d.z) > sim.config().paul.endcap_distance) {
            throw IntegrationError("recover_after_failure: particle left the Paul trap");
        }
        const Psd psd = welch_psd(tr.channel("qpd_x"), fs, seg);
        const double total = band_power(psd, psd.frequencies.front(), psd.frequencies.back());
        const double in_band = band_power(psd, cfg.paul_band.lo, cfg.paul_band.hi);
        if (total > 0.0 && in_band / total >= cfg.recovery_linear_fraction) {
            sim.set_schedule(Schedule::paul);
            return elapsed;
        }
    }
    throw AnalysisError("recover_after_failure: signal did not return to the linear range within " +
                        std::to_string(timeout) + " s");
}

GridMap<double> map_detection_sensitivity(Simulation& sim, const ProtocolConfig& cfg, const std::vector<double>& xs,
                                          const std::vector<double>& ys) {
    if (xs.empty() || ys.empty()) throw ValidationError("map grid is empty");
    check_stage(xs, cfg.stage_range, "x");
    check_stage(ys, cfg.stage_range, "y");
    if (!sim.config().paul.enabled) throw ValidationError("map_detection_sensitivity: Paul trap is off");
    SettingsGuard guard(sim);
    const Vec3 start = sim.trap_offset();
    const double z = start.z;
    sim.set_drive(DriveTone{Electrode::shim_x, cfg.tone_amplitude, cfg.tone_frequency, 0.0});
    GridMap<double> map{xs, ys, {}};
    map.data.reserve(xs.size() * ys.size());
    for (double y : ys) {
        for (double x : xs) {
            move_and_settle(sim, {x, y, z}, cfg);
            const TimeTrace tr = sim.run(measure_duration(cfg));
            map.data.push_back(lock_in(tr, "qpd_x", cfg.tone_frequency, cfg.demod_bandwidth).in_phase());
        }
    }
    move_and_settle(sim, start, cfg);
    return map;
}

FieldMap map_rf_field(Simulation& sim, const ProtocolConfig& cfg, const std::vector<double>& xs,
                      const std::vector<double>& ys) {
    if (xs.empty() || ys.empty()) throw ValidationError("map grid is empty");
    check_stage(xs, cfg.stage_range, "x");
    check_stage(ys, cfg.stage_range, "y");
    if (!(cfg.map_rf_amplitude > 0.0)) throw ValidationError("map_rf_amplitude must be > 0");
    SettingsGuard guard(sim);
    const Vec3 start = sim.trap_offset();
    const auto& particle = sim.particle();
    const double fs = sim.config().sample_rate;
    const std::size_t seg = segment_samples(cfg.segment_duration, fs);
    const double temperature = sim.config().environment.gas_temperature;
    const Vec3 w_opt = optical_frequencies(sim.config().optical, particle.mass);

    // Detector calibration on the thermal peaks, optical trap only.
    FieldMap out;
    sim.set_paul_enabled(false);
    sim.set_optical_enabled(true);
    sim.set_schedule(Schedule::off);
    sim.set_pressure(calibration_pressure);
    sim.thermalize_in_optical_trap(temperature);
    sim.advance(0.05);
    {
        const TimeTrace cal = sim.run(calibration_duration);
        out.calibration_x = calibrate(cal.channel("qpd_x"), fs, temperature, particle.mass, w_opt.x / units::two_pi, seg);
        out.calibration_y = calibrate(cal.channel("qpd_y"), fs, temperature, particle.mass, w_opt.y / units::two_pi, seg);
        // At room temperature the line is Duffing-broadened and the harmonic area relation is
        // biased; the factor is taken from the channel variance against the exact Boltzmann width.
        const Vec3 thermal = optical_thermal_variance(sim.config().optical, temperature, particle.mass);
        const double noise = std::pow(detector_noise_sigma(sim.config().detector, fs), 2);
        out.calibration_x.factor = std::sqrt(thermal.x / (variance(cal.channel("qpd_x")) - noise));
        out.calibration_y.factor = std::sqrt(thermal.y / (variance(cal.channel("qpd_y")) - noise));
    }

    // Mapping conditions: particle cooled in the optical trap, RF on at the mapping amplitude,
    // DC electrodes grounded.
    sim.set_pressure(guard.pressure());
    sim.set_schedule(Schedule::optical);
    sim.set_rf_amplitude(cfg.map_rf_amplitude);
    sim.set_dc_voltages(0.0, 0.0);
    sim.set_paul_enabled(true);
    sim.advance(0.1);

    // The response is off resonance, so the susceptibility needs the cold in-situ frequencies.
    double fx = 0.0;
    double fy = 0.0;
    {
        const TimeTrace cold = sim.run(0.5);
        const std::size_t fine = segment_samples(0.1, fs);
        fx = lorentzian_fit(welch_psd(cold.channel("qpd_x"), fs, fine), out.calibration_x.f0).f0;
        fy = lorentzian_fit(welch_psd(cold.channel("qpd_y"), fs, fine), out.calibration_y.f0).f0;
    }

    const double omega = sim.config().paul.drive_frequency;
    const double f_drive = omega / units::two_pi;
    auto chi = [&](double f0) {
        const double w0 = units::two_pi * f0;
        return particle.mass * (w0 * w0 - omega * omega) / particle.charge;
    };
    const double chi_x = chi(fx);
    const double chi_y = chi(fy);

    OpticalTrapConfig optical = sim.config().optical;
    optical.enabled = true;
    const double inside = -optical.depth * std::exp(-2.0);

    out.measured = {xs, ys, {}};
    out.analytic = {xs, ys, {}};
    double num = 0.0;
    double den = 0.0;
    for (double y : ys) {
        for (double x : xs) {
            move_and_settle(sim, {x, y, start.z}, cfg);
            const TimeTrace tr = sim.run(measure_duration(cfg));
            const Vec3 r{mean(tr.channel("x")), mean(tr.channel("y")), mean(tr.channel("z"))};
            if (!is_finite(r) || optical_potential(r, optical) > inside) {
                throw AnalysisError("map_rf_field: particle left the optical well at trap offset (" +
                                    std::to_string(x * 1e6) + ", " + std::to_string(y * 1e6) + ") um");
            }
            const double ix = lock_in(tr, "qpd_x", f_drive, cfg.demod_bandwidth).in_phase();
            const double iy = lock_in(tr, "qpd_y", f_drive, cfg.demod_bandwidth).in_phase();
            const Vec3 measured{out.calibration_x.factor * ix * chi_x, out.calibration_y.factor * iy * chi_y, 0.0};
            Vec3 analytic = paul_rf_field(r, 0.0, sim.config().paul);
            analytic.z = 0.0;
            out.measured.data.push_back(measured);
            out.analytic.data.push_back(analytic);
            if (std::hypot(x, y) <= field_map_radius) {
                num += dot(measured - analytic, measured - analytic);
                den += dot(analytic, analytic);
            }
        }
    }
    out.residual = den > 0.0 ? std::sqrt(num / den) : 0.0;
    move_and_settle(sim, start, cfg);
    return out;
}

}  // namespace hybridtrap
