// Command-line front end for the hybrid trap simulator.
#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hybridtrap/analysis.hpp"
#include "hybridtrap/config_io.hpp"
#include "hybridtrap/errors.hpp"
#include "hybridtrap/experiments.hpp"
#include "hybridtrap/protocol.hpp"
#include "hybridtrap/simulation.hpp"
#include "hybridtrap/trace_io.hpp"
#include "hybridtrap/units.hpp"

using namespace hybridtrap;

namespace {

struct Common {
    std::string config = "default";
    std::optional<std::uint64_t> seed;
    std::string out;
    bool no_feedback = false;
};

void add_common(CLI::App* app, Common& c, const std::string& default_out) {
    c.out = default_out;
    app->add_option("--config", c.config, "JSON configuration file, or 'default'");
    app->add_option("--seed", c.seed, "RNG seed (overrides the configuration)");
    app->add_option("--out", c.out, "output path")->capture_default_str();
    app->add_flag("--no-feedback", c.no_feedback, "disable feedback cooling");
}

ExperimentConfig load(const Common& c) {
    ExperimentConfig cfg = load_config(c.config);
    if (c.seed) cfg.sim.seed = *c.seed;
    return cfg;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

TimeTrace read_trace(const std::string& path) {
    return ends_with(path, ".htj") ? read_trace_journal(path) : read_trace_csv(path);
}

void write_trace(const TimeTrace& tr, const std::string& path) {
    if (ends_with(path, ".htj")) {
        write_trace_journal(tr, path);
    } else {
        write_trace_csv(tr, path);
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    return f;
}

void print_summary(const SweepResult& r) {
    write_summary_csv(r, std::cout);
}

std::vector<double> centred_grid(double half_span, int points) {
    return points == 1 ? std::vector<double>{0.0} : linear_grid(-half_span, half_span, points);
}

// Simulation held in the Paul trap with cooling on, ready for in-situ procedures.
Simulation paul_ready(const ExperimentConfig& cfg, bool feedback) {
    Simulation sim(cfg.sim, 0);
    prepare_precooled(sim, feedback);
    sim.advance(0.1);
    return sim;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid Paul/optical trap simulator"};
    app.require_subcommand(1);

    // simulate
    Common sim_opts;
    double duration = 0.1;
    auto* simulate = app.add_subcommand("simulate", "run one trajectory and write its trace (.csv or .htj)");
    add_common(simulate, sim_opts, "trace.csv");
    simulate->add_option("--duration", duration, "simulated time in s")->capture_default_str();

    // sweep pressure | alignment
    auto* sweep = app.add_subcommand("sweep", "transfer-success sweeps");
    sweep->require_subcommand(1);
    struct SweepOpts {
        Common common;
        int trials = 40;
        int parallel = 0;
        std::vector<double> values;
    };
    SweepOpts pressure_opts;
    SweepOpts alignment_opts;
    auto add_sweep = [&](const char* name, const char* help, SweepOpts& o, const char* out, const char* values_help) {
        auto* cmd = sweep->add_subcommand(name, help);
        add_common(cmd, o.common, out);
        cmd->add_option("--trials", o.trials, "transfer attempts per point")->capture_default_str();
        cmd->add_option("--parallel", o.parallel, "worker threads (default: HYBRIDTRAP_THREADS or all cores)");
        cmd->add_option("--values", o.values, values_help);
        return cmd;
    };
    auto* sweep_pressure = add_sweep("pressure", "success rate versus pressure", pressure_opts, "sweep_pressure",
                                     "pressures in mbar (default: 12 points, 1e-6 to 1e-1)");
    auto* sweep_alignment = add_sweep("alignment", "success rate versus x offset of the Paul trap", alignment_opts,
                                      "sweep_alignment", "offsets in nm (default: 0 to 800 in 100 nm steps)");

    // map sensitivity | field
    auto* map = app.add_subcommand("map", "position maps");
    map->require_subcommand(1);
    Common sens_opts;
    double sens_span = 3.0;
    int sens_points = 13;
    auto* map_sens = map->add_subcommand("sensitivity", "detector response to an x-shim tone over trap offsets");
    add_common(map_sens, sens_opts, "sensitivity_map.csv");
    map_sens->add_option("--half-span", sens_span, "half width of the grid in um")->capture_default_str();
    map_sens->add_option("--points", sens_points, "grid points per axis")->check(CLI::PositiveNumber)->capture_default_str();
    Common field_opts;
    double field_span = 100.0;
    int field_points = 5;
    auto* map_field = map->add_subcommand("field", "calibrated RF field amplitude over trap offsets");
    add_common(map_field, field_opts, "field_map.csv");
    map_field->add_option("--half-span", field_span, "half width of the grid in um")->capture_default_str();
    map_field->add_option("--points", field_points, "grid points per axis")->check(CLI::PositiveNumber)->capture_default_str();

    // psd
    std::string psd_input;
    std::string psd_channel = "qpd_x";
    std::string psd_out = "psd.csv";
    double psd_segment_ms = 10.0;
    auto* psd = app.add_subcommand("psd", "Welch PSD of one channel of a recorded trace");
    psd->add_option("trace", psd_input, "trace file (.csv or .htj)")->required();
    psd->add_option("--channel", psd_channel, "channel name")->capture_default_str();
    psd->add_option("--segment-ms", psd_segment_ms, "Welch segment length in ms")->capture_default_str();
    psd->add_option("--out", psd_out, "output CSV")->capture_default_str();

    // compensate
    Common comp_opts;
    std::vector<double> stray;
    auto* compensate = app.add_subcommand("compensate", "null micromotion with the shim electrodes");
    add_common(compensate, comp_opts, "");
    compensate->add_option("--stray", stray, "injected stray field Ex Ey Ez in V/m")->expected(3);

    // align
    Common align_opts;
    std::vector<double> offset;
    auto* align = app.add_subcommand("align", "centre the Paul trap on the detector focus");
    add_common(align, align_opts, "");
    align->add_option("--offset", offset, "initial trap offset x y z in nm")->expected(3);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*simulate) {
            ExperimentConfig cfg = load(sim_opts);
            if (sim_opts.no_feedback) cfg.sim.feedback.schedule = Schedule::off;
            write_trace(hybridtrap::simulate(cfg.sim, duration), sim_opts.out);
            std::cout << "wrote " << sim_opts.out << '\n';
        } else if (*sweep) {
            const bool is_pressure = static_cast<bool>(*sweep_pressure);
            SweepOpts& o = is_pressure ? pressure_opts : alignment_opts;
            SweepSpec spec;
            spec.parameter = is_pressure ? SweepParameter::pressure : SweepParameter::offset_x;
            spec.base = load(o.common);
            spec.trials = o.trials;
            spec.feedback = !o.common.no_feedback;
            spec.output = o.common.out;
            spec.values = o.values;
            if (spec.values.empty()) spec.values = is_pressure ? log_grid(1e-6, 1e-1, 12) : linear_grid(0.0, 800.0, 9);
            const int threads = o.parallel > 0 ? o.parallel : default_parallelism();
            print_summary(run_sweep(spec, threads));
            std::cout << "wrote " << spec.output << "_trials.csv and " << spec.output << "_summary.csv\n";
            (void)sweep_alignment;
        } else if (*map_sens) {
            const ExperimentConfig cfg = load(sens_opts);
            Simulation sim = paul_ready(cfg, !sens_opts.no_feedback);
            const auto grid = centred_grid(sens_span * 1e-6, sens_points);
            const auto m = map_detection_sensitivity(sim, cfg.protocol, grid, grid);
            auto f = open_out(sens_opts.out);
            f << "x[um],y[um],response[V]\n";
            for (std::size_t iy = 0; iy < m.ys.size(); ++iy) {
                for (std::size_t ix = 0; ix < m.xs.size(); ++ix) {
                    f << m.xs[ix] * 1e6 << ',' << m.ys[iy] * 1e6 << ',' << m.at(ix, iy) << '\n';
                }
            }
            std::cout << "wrote " << sens_opts.out << '\n';
        } else if (*map_field) {
            ExperimentConfig cfg = load(field_opts);
            cfg.sim.paul.enabled = true;
            cfg.sim.optical.enabled = true;
            Simulation sim(cfg.sim, 0);
            sim.thermalize_in_optical_trap(cfg.sim.environment.gas_temperature);
            sim.set_schedule(field_opts.no_feedback ? Schedule::off : Schedule::optical);
            const auto grid = centred_grid(field_span * 1e-6, field_points);
            const FieldMap m = map_rf_field(sim, cfg.protocol, grid, grid);
            auto f = open_out(field_opts.out);
            f << "x[um],y[um],Ex[V/m],Ey[V/m],Ex_analytic[V/m],Ey_analytic[V/m]\n";
            for (std::size_t iy = 0; iy < m.measured.ys.size(); ++iy) {
                for (std::size_t ix = 0; ix < m.measured.xs.size(); ++ix) {
                    const Vec3& a = m.measured.at(ix, iy);
                    const Vec3& b = m.analytic.at(ix, iy);
                    f << m.measured.xs[ix] * 1e6 << ',' << m.measured.ys[iy] * 1e6 << ',' << a.x << ',' << a.y << ','
                      << b.x << ',' << b.y << '\n';
                }
            }
            std::cout << "calibration x: " << m.calibration_x.factor << " m/V at " << m.calibration_x.f0 << " Hz\n"
                      << "calibration y: " << m.calibration_y.factor << " m/V at " << m.calibration_y.f0 << " Hz\n"
                      << "residual within 100 um: " << m.residual << '\n'
                      << "wrote " << field_opts.out << '\n';
        } else if (*psd) {
            const TimeTrace tr = read_trace(psd_input);
            const auto& names = tr.names();
            const auto it = std::find(names.begin(), names.end(), psd_channel);
            if (it == names.end()) throw ValidationError("trace has no channel '" + psd_channel + "'");
            const std::string unit = tr.units()[static_cast<std::size_t>(it - names.begin())];
            const auto column = tr.channel(psd_channel);
            const Psd p = welch_psd(column, tr.sample_rate(), segment_samples(psd_segment_ms * 1e-3, tr.sample_rate()));
            auto f = open_out(psd_out);
            write_psd_csv(p, unit, f);
            std::cout << "wrote " << psd_out << '\n';
        } else if (*compensate) {
            ExperimentConfig cfg = load(comp_opts);
            if (!stray.empty()) cfg.sim.paul.stray_field = {stray[0], stray[1], stray[2]};
            cfg.sim.optical.enabled = false;
            Simulation sim = paul_ready(cfg, !comp_opts.no_feedback);
            const double before = micromotion_amplitude(sim, cfg.protocol);
            const Vec3 v = compensate_stray_fields(sim, cfg.protocol);
            const double after = micromotion_amplitude(sim, cfg.protocol);
            std::printf("shim voltages [V]: %.6g %.6g %.6g\nmicromotion [V]: %.4g -> %.4g\n", v.x, v.y, v.z, before, after);
        } else if (*align) {
            ExperimentConfig cfg = load(align_opts);
            if (!offset.empty()) cfg.sim.paul.trap_offset = Vec3{offset[0], offset[1], offset[2]} * 1e-9;
            cfg.sim.optical.enabled = false;
            Simulation sim = paul_ready(cfg, !align_opts.no_feedback);
            const Vec3 e = align_traps(sim, cfg.protocol);
            const Vec3 t = sim.trap_offset();
            std::printf("estimated misalignment [nm]: %.1f %.1f %.1f\ntrap offset now [nm]: %.1f %.1f %.1f\n", e.x * 1e9,
                        e.y * 1e9, e.z * 1e9, t.x * 1e9, t.y * 1e9, t.z * 1e9);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
