#include "hybridtrap/config.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hybridtrap/errors.hpp"
#include "hybridtrap/fields.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    if (problems.size() == 1) return problems.front();
    std::ostringstream os;
    os << problems.size() << " problems";
    for (const auto& p : problems) os << "; " << p;
    return os.str();
}

bool all_positive(const Vec3& v) { return v.x > 0.0 && v.y > 0.0 && v.z > 0.0; }
bool all_non_negative(const Vec3& v) { return v.x >= 0.0 && v.y >= 0.0 && v.z >= 0.0; }

constexpr double arc_discharge_pressure = units::mbar(1e-2);
constexpr double min_steps_per_fastest_period = 50.0;

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

ParticleProperties derive_particle_properties(const ParticleSpec& spec) {
    if (!(spec.radius > 0.0) || !(spec.density > 0.0)) {
        throw ValidationError("particle radius and density must be positive");
    }
    ParticleProperties p;
    p.mass = 4.0 / 3.0 * units::pi * spec.radius * spec.radius * spec.radius * spec.density;
    p.charge = spec.charge_to_mass * p.mass;
    p.elementary_charges = p.charge / units::elementary_charge;
    return p;
}

SimConfig default_config() {
    SimConfig cfg;
    const auto particle = derive_particle_properties(cfg.particle);
    const Vec3 optical_targets{units::rad_per_s_from_khz(69.0), units::rad_per_s_from_khz(74.0),
                               units::rad_per_s_from_khz(15.0)};
    cfg.optical = derive_optical_geometry(optical_targets, units::ev(0.550), particle.mass);
    cfg.optical.enabled = false;
    cfg.optical.scattering_force = 5e-15;
    cfg.paul.drive_frequency = units::rad_per_s_from_khz(33.0);
    return cfg;
}

int steps_per_sample(const SimConfig& cfg) {
    if (!(cfg.dt > 0.0) || !(cfg.sample_rate > 0.0)) return 1;
    return std::max(1, static_cast<int>(std::lround(1.0 / (cfg.sample_rate * cfg.dt))));
}

ValidationReport validate_config(const SimConfig& input) {
    ValidationReport report{input, {}};
    SimConfig& cfg = report.config;
    std::vector<std::string> problems;

    const auto& ps = cfg.particle;
    if (!(ps.radius > 0.0)) problems.emplace_back("particle.radius must be > 0");
    if (!(ps.density > 0.0)) problems.emplace_back("particle.density must be > 0");
    if (!std::isfinite(ps.charge_to_mass)) problems.emplace_back("particle.charge_to_mass must be finite");

    const auto& env = cfg.environment;
    if (!(env.pressure >= 0.0)) problems.emplace_back("environment.pressure must be >= 0");
    if (!(env.gas_temperature > 0.0)) problems.emplace_back("environment.gas_temperature must be > 0");
    if (!(env.gas_viscosity > 0.0)) problems.emplace_back("environment.gas_viscosity must be > 0");
    if (!(env.gas_molecule_diameter > 0.0)) problems.emplace_back("environment.gas_molecule_diameter must be > 0");
    if (!is_finite(env.gravity)) problems.emplace_back("environment.gravity must be finite");

    const auto& opt = cfg.optical;
    if (!(opt.depth > 0.0)) problems.emplace_back("optical.depth must be > 0");
    if (!(opt.waist_x > 0.0) || !(opt.waist_y > 0.0)) problems.emplace_back("optical waists must be > 0");
    if (!(opt.rayleigh_range > 0.0)) problems.emplace_back("optical.rayleigh_range must be > 0");
    if (!std::isfinite(opt.scattering_force)) problems.emplace_back("optical.scattering_force must be finite");

    const auto& paul = cfg.paul;
    if (!(paul.drive_frequency > 0.0)) problems.emplace_back("paul.drive_frequency must be > 0");
    if (!(paul.rf_amplitude >= 0.0)) problems.emplace_back("paul.rf_amplitude must be >= 0");
    if (!(paul.endcap_voltage >= 0.0)) problems.emplace_back("paul.endcap_voltage must be >= 0");
    if (!std::isfinite(paul.dc_offset)) problems.emplace_back("paul.dc_offset must be finite");
    if (!(paul.tip_distance > 0.0)) problems.emplace_back("paul.tip_distance must be > 0");
    if (!(paul.endcap_distance > 0.0)) problems.emplace_back("paul.endcap_distance must be > 0");
    if (!(paul.rf_efficiency > 0.0 && paul.rf_efficiency <= 2.0)) problems.emplace_back("paul.rf_efficiency must be in (0, 2]");
    if (!(paul.endcap_efficiency > 0.0 && paul.endcap_efficiency <= 2.0)) {
        problems.emplace_back("paul.endcap_efficiency must be in (0, 2]");
    }
    if (!(paul.dc_offset_gain >= 0.0)) problems.emplace_back("paul.dc_offset_gain must be >= 0");
    if (!is_finite(paul.shim_voltage) || !is_finite(paul.stray_field) || !is_finite(paul.trap_offset)) {
        problems.emplace_back("paul shim, stray field and offset vectors must be finite");
    }
    if (!all_non_negative(paul.shim_gain)) problems.emplace_back("paul.shim_gain must be >= 0");

    const auto& det = cfg.detector;
    if (!(det.measurement_waist > 0.0)) problems.emplace_back("detector.measurement_waist must be > 0");
    if (!(det.inversion_length > 0.0)) problems.emplace_back("detector.inversion_length must be > 0");
    if (!(det.noise_floor >= 0.0)) problems.emplace_back("detector.noise_floor must be >= 0");
    if (!is_finite(det.gain)) problems.emplace_back("detector.gain must be finite");

    if (!(cfg.sample_rate > 0.0)) problems.emplace_back("run.sample_rate must be > 0");
    if (!(cfg.dt > 0.0)) problems.emplace_back("run.dt must be > 0");

    const auto& fb = cfg.feedback;
    const double nyquist = cfg.sample_rate / 2.0;
    for (const Vec3& f : {fb.paul_frequencies, fb.optical_frequencies}) {
        if (!all_positive(f) || f.x >= nyquist || f.y >= nyquist || f.z >= nyquist) {
            problems.emplace_back("feedback centre frequencies must lie in (0, Nyquist)");
            break;
        }
    }
    if (!(fb.quality_factor > 0.0)) problems.emplace_back("feedback.quality_factor must be > 0");
    if (!all_non_negative(fb.paul_gain) || !all_non_negative(fb.optical_gain)) {
        problems.emplace_back("feedback gains must be >= 0");
    }
    if (fb.loop_delay < 0) problems.emplace_back("feedback.loop_delay must be >= 0");
    if (!(fb.voltage_clamp > 0.0)) problems.emplace_back("feedback.voltage_clamp must be > 0");

    if (!problems.empty()) throw ValidationError(std::move(problems));

    // Lock dt to an integer number of steps per recorded sample.
    const int n = steps_per_sample(cfg);
    cfg.dt = 1.0 / (cfg.sample_rate * n);

    const auto particle = derive_particle_properties(cfg.particle);
    const Vec3 w_opt = optical_frequencies(cfg.optical, particle.mass);
    double f_max = std::max({w_opt.x, w_opt.y, w_opt.z, paul.drive_frequency}) / units::two_pi;
    f_max = std::max({f_max, fb.paul_frequencies.x, fb.paul_frequencies.y, fb.paul_frequencies.z,
                      fb.optical_frequencies.x, fb.optical_frequencies.y, fb.optical_frequencies.z});
    if (cfg.dt > 1.0 / (min_steps_per_fastest_period * f_max)) {
        std::ostringstream os;
        os << "run.dt too coarse: " << cfg.dt << " s > 1/(50 * " << f_max << " Hz)";
        problems.push_back(os.str());
    }

    if (paul.enabled) {
        const auto m = mathieu_parameters(paul, particle);
        const std::array<std::pair<const char*, std::pair<double, double>>, 3> axes{{
            {"u", {m.a_u, m.q_u}}, {"v", {m.a_v, m.q_v}}, {"z", {m.a_z, 0.0}}}};
        for (const auto& [name, aq] : axes) {
            const auto fl = floquet_stability(aq.first, aq.second);
            if (!fl.stable) {
                std::ostringstream os;
                os << "Mathieu-unstable along " << name << " (a=" << aq.first << ", q=" << aq.second
                   << ", |trace|=" << std::abs(fl.monodromy_trace) << ")";
                problems.push_back(os.str());
            }
        }
        if (paul.rf_amplitude > 0.0 && env.pressure > arc_discharge_pressure) {
            report.warnings.emplace_back("arc-discharge regime: RF drive enabled above 1e-2 mbar");
        }
    }

    if (!problems.empty()) throw ValidationError(std::move(problems));
    return report;
}

std::string to_string(Schedule s) {
    switch (s) {
        case Schedule::off: return "off";
        case Schedule::paul: return "paul";
        case Schedule::optical: return "optical";
    }
    return "off";
}

Schedule schedule_from_string(const std::string& name) {
    if (name == "off") return Schedule::off;
    if (name == "paul") return Schedule::paul;
    if (name == "optical") return Schedule::optical;
    throw ValidationError("unknown feedback schedule '" + name + "'");
}

}  // namespace hybridtrap
