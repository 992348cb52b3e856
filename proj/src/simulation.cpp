#include "hybridtrap/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/random/normal_distribution.hpp>

#include "hybridtrap/errors.hpp"
#include "hybridtrap/fields.hpp"
#include "hybridtrap/sensing.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

namespace {

const std::vector<std::string> kChannelNames{"x", "y", "z", "vx", "vy", "vz", "qpd_x", "qpd_y", "qpd_z", "fb_x", "fb_y", "fb_z"};
const std::vector<std::string> kChannelUnits{"m", "m", "m", "m/s", "m/s", "m/s", "V", "V", "V", "V", "V", "V"};

// cos/sin of w t advanced by rotation; re-anchored with exact values once per sample.
struct Phasor {
    double c = 1.0, s = 0.0;
    double rc = 1.0, rs = 0.0;

    void anchor(double phase, double step) {
        c = std::cos(phase);
        s = std::sin(phase);
        rc = std::cos(step);
        rs = std::sin(step);
    }
    double advance() {
        const double nc = c * rc - s * rs;
        s = s * rc + c * rs;
        c = nc;
        return c;
    }
};

// Flattened force model of trap_force() for the inner loop.
struct ForceKernel {
    Vec3 dc_force;
    bool paul = false;
    Vec3 offset;
    double rf_coef = 0.0;   // Q eta V_rf / r0^2
    double off_coef = 0.0;  // Q g V_off / r0^2
    double cap_coef = 0.0;  // Q kappa V_cap / z0^2
    double drive_w = 0.0;
    bool optical = false;
    bool gaussian = true;
    double depth = 0.0;
    double inv_wx2 = 0.0, inv_wy2 = 0.0, inv_zr2 = 0.0;
    double scatter = 0.0;

    ForceKernel() = default;
    ForceKernel(const SimConfig& cfg, const ParticleProperties& p) {
        const auto& pc = cfg.paul;
        dc_force = cfg.environment.gravity * p.mass + (hadamard(pc.shim_gain, pc.shim_voltage) + pc.stray_field) * p.charge;
        paul = pc.enabled;
        offset = pc.trap_offset;
        const double r02 = pc.tip_distance * pc.tip_distance;
        rf_coef = p.charge * pc.rf_efficiency * pc.rf_amplitude / r02;
        off_coef = p.charge * pc.dc_offset_gain * pc.dc_offset / r02;
        cap_coef = p.charge * pc.endcap_efficiency * pc.endcap_voltage / (pc.endcap_distance * pc.endcap_distance);
        drive_w = pc.drive_frequency;
        const auto& oc = cfg.optical;
        optical = oc.enabled;
        gaussian = oc.duffing_enabled;
        depth = oc.depth;
        inv_wx2 = 1.0 / (oc.waist_x * oc.waist_x);
        inv_wy2 = 1.0 / (oc.waist_y * oc.waist_y);
        inv_zr2 = 1.0 / (oc.rayleigh_range * oc.rayleigh_range);
        scatter = oc.scattering_force;
    }

    Vec3 operator()(const Vec3& r, double t) const { return at(r, std::cos(drive_w * t)); }

    // `cos_rf` = cos(Omega t).
    Vec3 at(const Vec3& r, double cos_rf) const {
        Vec3 f = dc_force;
        if (paul) {
            const Vec3 d = r - offset;
            const double s = rf_coef * cos_rf + off_coef;
            f.x += s * d.y + cap_coef * d.x;
            f.y += s * d.x + cap_coef * d.y;
            f.z -= 2.0 * cap_coef * d.z;
        }
        if (optical) {
            if (gaussian) {
                const double inv_s = 1.0 / (1.0 + r.z * r.z * inv_zr2);
                const double rho = r.x * r.x * inv_wx2 + r.y * r.y * inv_wy2;
                const double intensity = inv_s * std::exp(-2.0 * rho * inv_s);
                const double u = -depth * intensity;
                f.x += 4.0 * u * r.x * inv_s * inv_wx2;
                f.y += 4.0 * u * r.y * inv_s * inv_wy2;
                f.z += -u * 2.0 * r.z * inv_s * inv_zr2 * (2.0 * rho * inv_s - 1.0) + scatter * intensity;
            } else {
                f.x -= 4.0 * depth * inv_wx2 * r.x;
                f.y -= 4.0 * depth * inv_wy2 * r.y;
                f.z += -2.0 * depth * inv_zr2 * r.z + scatter;
            }
        }
        return f;
    }
};

}  // namespace

const std::vector<std::string>& trace_channel_names() { return kChannelNames; }
const std::vector<std::string>& trace_channel_units() { return kChannelUnits; }

Simulation::Simulation(const SimConfig& cfg, std::uint64_t trial)
    : cfg_(validate_config(cfg).config),
      particle_(derive_particle_properties(cfg_.particle)),
      trial_(trial),
      thermal_rng_(cfg_.seed, stream_id(trial, StreamPurpose::thermal)),
      control_rng_(cfg_.seed, stream_id(trial, StreamPurpose::control_noise)),
      record_rng_(cfg_.seed, stream_id(trial, StreamPurpose::record_noise)),
      init_rng_(cfg_.seed, stream_id(trial, StreamPurpose::initial_state)) {
    steps_per_sample_ = hybridtrap::steps_per_sample(cfg_);
    controller_ = Controller(cfg_.feedback, 1.0 / cfg_.dt, actuation());
    control_noise_sigma_ = detector_noise_sigma(cfg_.detector, 1.0 / cfg_.dt);
    record_noise_sigma_ = detector_noise_sigma(cfg_.detector, cfg_.sample_rate);
    refresh_coefficients();
    state_.position = cfg_.paul.enabled ? paul_equilibrium() : Vec3{};
}

void Simulation::refresh_coefficients() {
    gamma_ = gas_damping_rate(cfg_.environment, cfg_.particle);
    coeff_ = langevin_coefficients(gamma_, cfg_.environment.gas_temperature, particle_.mass, cfg_.dt);
    force_valid_ = false;
}

Vec3 Simulation::actuation() const { return cfg_.paul.shim_gain * particle_.charge; }

void Simulation::set_state(const SimState& s) {
    state_ = s;
    force_valid_ = false;
}

void Simulation::set_optical_enabled(bool on) {
    cfg_.optical.enabled = on;
    force_valid_ = false;
}

void Simulation::set_paul_enabled(bool on) {
    cfg_.paul.enabled = on;
    force_valid_ = false;
}

void Simulation::set_schedule(Schedule s) {
    cfg_.feedback.schedule = s;
    controller_.switch_schedule(s);
    control_force_ = {};
    force_valid_ = false;
}

void Simulation::set_shim_voltage(const Vec3& v) {
    cfg_.paul.shim_voltage = v;
    force_valid_ = false;
}

void Simulation::set_stray_field(const Vec3& e) {
    cfg_.paul.stray_field = e;
    force_valid_ = false;
}

void Simulation::set_rf_amplitude(double v) {
    cfg_.paul.rf_amplitude = v;
    force_valid_ = false;
}

void Simulation::set_dc_voltages(double endcap, double dc_offset) {
    cfg_.paul.endcap_voltage = endcap;
    cfg_.paul.dc_offset = dc_offset;
    force_valid_ = false;
}

void Simulation::set_pressure(double pascal) {
    cfg_.environment.pressure = pascal;
    refresh_coefficients();
}

void Simulation::set_drive(std::optional<DriveTone> tone) {
    if (tone && (!(tone->frequency > 0.0) || !std::isfinite(tone->amplitude))) {
        throw ValidationError("drive tone needs a positive frequency and finite amplitude");
    }
    drive_ = tone;
    force_valid_ = false;
}

void Simulation::move_trap(const Vec3& target, double ramp) {
    if (ramp <= 0.0) {
        cfg_.paul.trap_offset = target;
        ramping_ = false;
    } else {
        ramp_from_ = cfg_.paul.trap_offset;
        ramp_to_ = target;
        ramp_start_ = state_.time;
        ramp_end_ = state_.time + ramp;
        ramping_ = true;
    }
    force_valid_ = false;
}

Vec3 Simulation::paul_equilibrium() const {
    const auto& pc = cfg_.paul;
    const Vec3 dc = cfg_.environment.gravity * particle_.mass +
                    (hadamard(pc.shim_gain, pc.shim_voltage) + pc.stray_field) * particle_.charge;
    if (!pc.enabled) return pc.trap_offset;
    const Vec3 w = secular_frequencies(pc, particle_);
    const double m = particle_.mass;
    const double fu = (dc.x + dc.y) / std::sqrt(2.0);
    const double fv = (dc.y - dc.x) / std::sqrt(2.0);
    const double du = fu / (m * w.x * w.x);
    const double dv = fv / (m * w.y * w.y);
    return pc.trap_offset + Vec3{(du - dv) / std::sqrt(2.0), (du + dv) / std::sqrt(2.0), dc.z / (m * w.z * w.z)};
}

void Simulation::thermalize_in_paul_trap(double temperature) {
    thermalize_in_paul_trap(Vec3{temperature, temperature, temperature});
}

void Simulation::thermalize_in_paul_trap(const Vec3& mode_temperatures) {
    const Vec3 w = secular_frequencies(cfg_.paul, particle_);
    const Vec3 s{std::sqrt(units::boltzmann * mode_temperatures.x / particle_.mass),
                 std::sqrt(units::boltzmann * mode_temperatures.y / particle_.mass),
                 std::sqrt(units::boltzmann * mode_temperatures.z / particle_.mass)};
    boost::random::normal_distribution<double> normal;
    const double u = normal(init_rng_) * s.x / w.x;
    const double v = normal(init_rng_) * s.y / w.y;
    const double z = normal(init_rng_) * s.z / w.z;
    const double vu = normal(init_rng_) * s.x;
    const double vv = normal(init_rng_) * s.y;
    const double vz = normal(init_rng_) * s.z;
    const double r2 = 1.0 / std::sqrt(2.0);
    state_.position = paul_equilibrium() + Vec3{(u - v) * r2, (u + v) * r2, z};
    state_.velocity = Vec3{(vu - vv) * r2, (vu + vv) * r2, vz};
    force_valid_ = false;
}

void Simulation::thermalize_in_optical_trap(double temperature) {
    const Vec3 w = optical_frequencies(cfg_.optical, particle_.mass);
    const double kt_m = units::boltzmann * temperature / particle_.mass;
    boost::random::normal_distribution<double> normal;
    const Vec3 shift{0.0, 0.0, cfg_.optical.scattering_force / (particle_.mass * w.z * w.z)};
    state_.position =
        shift + Vec3{normal(init_rng_) / w.x, normal(init_rng_) / w.y, normal(init_rng_) / w.z} * std::sqrt(kt_m);
    state_.velocity = Vec3{normal(init_rng_), normal(init_rng_), normal(init_rng_)} * std::sqrt(kt_m);
    force_valid_ = false;
}

Vec3 Simulation::total_force(const Vec3& r, double t) {
    return ForceKernel(cfg_, particle_)(r, t) + control_force_;
}

TimeTrace Simulation::run(double duration, const SampleHook& hook) {
    if (!(duration > 0.0)) throw ValidationError("run duration must be > 0");
    const auto samples = static_cast<std::size_t>(std::llround(duration * cfg_.sample_rate));
    TimeTrace trace(kChannelNames, kChannelUnits, cfg_.sample_rate, state_.time + 1.0 / cfg_.sample_rate);
    trace.reserve(samples);
    advance_samples(samples, &trace, hook ? &hook : nullptr);
    return trace;
}

void Simulation::advance(double duration) {
    if (!(duration > 0.0)) throw ValidationError("advance duration must be > 0");
    advance_samples(static_cast<std::size_t>(std::llround(duration * cfg_.sample_rate)), nullptr, nullptr);
}

void Simulation::advance_samples(std::size_t samples, TimeTrace* out, const SampleHook* hook) {
    ForceKernel kernel(cfg_, particle_);
    const DetectorConfig& det = cfg_.detector;
    const Vec3 inv_gain{det.gain.x != 0.0 ? 1.0 / det.gain.x : 0.0, det.gain.y != 0.0 ? 1.0 / det.gain.y : 0.0,
                        det.gain.z != 0.0 ? 1.0 / det.gain.z : 0.0};
    const bool control = controller_.active();
    const std::optional<DriveTone> drive = drive_;
    // Shim tones push uniformly along one axis; an endcap tone modulates the endcap quadrupole.
    int drive_axis = 0;
    double drive_force = 0.0;
    double endcap_coef = 0.0;
    if (drive) {
        if (drive->electrode == Electrode::endcap) {
            const double z0 = cfg_.paul.endcap_distance;
            endcap_coef = particle_.charge * cfg_.paul.endcap_efficiency * drive->amplitude / (z0 * z0);
        } else {
            drive_axis = static_cast<int>(drive->electrode);
            drive_force = particle_.charge * cfg_.paul.shim_gain[drive_axis] * drive->amplitude;
        }
    }
    const double tone_w = drive ? units::two_pi * drive->frequency : 0.0;
    auto tone_force = [&](const Vec3& r, double c) {
        Vec3 f;
        if (endcap_coef != 0.0) {
            const Vec3 d = r - kernel.offset;
            const double k = endcap_coef * c;
            f = Vec3{k * d.x, k * d.y, -2.0 * k * d.z};
        } else {
            f[drive_axis] = drive_force * c;
        }
        return f;
    };

    boost::random::normal_distribution<double> normal;
    auto thermal = [&] { return normal(thermal_rng_); };

    const double start_time = state_.time;
    const double dt = cfg_.dt;
    std::uint64_t step_index = 0;
    Phasor rf;
    Phasor tone;
    auto force_at = [&](const Vec3& r, double t) {
        if (ramping_) {
            const double a = std::clamp((t - ramp_start_) / (ramp_end_ - ramp_start_), 0.0, 1.0);
            kernel.offset = ramp_from_ + (ramp_to_ - ramp_from_) * a;
            cfg_.paul.trap_offset = kernel.offset;
            if (a >= 1.0) ramping_ = false;
        }
        Vec3 f = kernel.at(r, rf.advance());
        if (drive) f += tone_force(r, tone.advance());
        if (control) {
            Vec3 s = detector_response(r, det);
            if (control_noise_sigma_ > 0.0) {
                s += Vec3{normal(control_rng_), normal(control_rng_), normal(control_rng_)} * control_noise_sigma_;
            }
            control_force_ = controller_.step(hadamard(s, inv_gain));
        }
        return f + control_force_;
    };

    if (!force_valid_) {
        force_ = kernel(state_.position, state_.time) + control_force_;
        if (drive) force_ += tone_force(state_.position, std::cos(tone_w * state_.time + drive->phase));
        force_valid_ = true;
    }

    std::array<double, 12> row{};
    for (std::size_t n = 0; n < samples; ++n) {
        rf.anchor(kernel.drive_w * state_.time, kernel.drive_w * dt);
        if (drive) tone.anchor(tone_w * state_.time + drive->phase, tone_w * dt);
        for (int k = 0; k < steps_per_sample_; ++k) {
            detail::baoab_step(state_, force_, coeff_, force_at, thermal);
            // Re-anchor time to the step count so long runs do not accumulate rounding.
            ++step_index;
            state_.time = start_time + static_cast<double>(step_index) * dt;
        }
        if (!is_finite(state_.position) || !is_finite(state_.velocity)) {
            std::ostringstream os;
            os << "non-finite particle state at t=" << state_.time << " s (trial " << trial_ << ")";
            throw IntegrationError(os.str());
        }
        if (out != nullptr || hook != nullptr) {
            Vec3 qpd = detector_response(state_.position, det);
            if (record_noise_sigma_ > 0.0) {
                qpd += Vec3{normal(record_rng_), normal(record_rng_), normal(record_rng_)} * record_noise_sigma_;
            }
            const Vec3 fb = controller_.voltages();
            if (out != nullptr) {
                row = {state_.position.x, state_.position.y, state_.position.z, state_.velocity.x, state_.velocity.y,
                       state_.velocity.z, qpd.x, qpd.y, qpd.z, fb.x, fb.y, fb.z};
                out->append(row);
            }
            if (hook != nullptr) (*hook)(SampleView{state_, qpd, fb});
        }
    }
}

TimeTrace simulate(const SimConfig& cfg, double duration, const SampleHook& hook) {
    if (!(duration > 0.0)) throw ValidationError("simulate: duration must be > 0");
    Simulation sim(cfg);
    if (cfg.paul.enabled) {
        sim.thermalize_in_paul_trap(cfg.environment.gas_temperature);
    } else if (cfg.optical.enabled) {
        sim.thermalize_in_optical_trap(cfg.environment.gas_temperature);
    }
    return sim.run(duration, hook);
}

}  // namespace hybridtrap
