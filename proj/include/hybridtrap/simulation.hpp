#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "hybridtrap/config.hpp"
#include "hybridtrap/control.hpp"
#include "hybridtrap/dynamics.hpp"
#include "hybridtrap/rng.hpp"

namespace hybridtrap {

enum class Electrode { shim_x, shim_y, shim_z, endcap };

/// Sinusoidal voltage added to one electrode: V(t) = amplitude * cos(2 pi f t + phase).
struct DriveTone {
    Electrode electrode = Electrode::shim_x;
    double amplitude = 0.0;  // V
    double frequency = 0.0;  // Hz
    double phase = 0.0;      // rad
};

/// Values handed to per-sample hooks.
struct SampleView {
    const SimState& state;
    const Vec3& detector;      // V, recorded (noisy) detector sample
    const Vec3& feedback;      // V, shim voltages from the controller
};

using SampleHook = std::function<void(const SampleView&)>;

/// Channel names of every recorded trace, in column order.
const std::vector<std::string>& trace_channel_names();
const std::vector<std::string>& trace_channel_units();

/// One particle in the hybrid trap. Owns its configuration, RNG streams, controller and state,
/// and advances them with a fixed-step Langevin integrator. The detector and controller run at
/// the integrator rate; traces are recorded at the configured sample rate.
class Simulation {
public:
    /// Validates `cfg` (throws ValidationError). `trial` selects the RNG streams.
    explicit Simulation(const SimConfig& cfg, std::uint64_t trial = 0);

    [[nodiscard]] const SimConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const ParticleProperties& particle() const noexcept { return particle_; }
    [[nodiscard]] const SimState& state() const noexcept { return state_; }
    [[nodiscard]] double time() const noexcept { return state_.time; }
    [[nodiscard]] double damping_rate() const noexcept { return gamma_; }
    [[nodiscard]] const Controller& controller() const noexcept { return controller_; }
    [[nodiscard]] std::uint64_t trial() const noexcept { return trial_; }
    [[nodiscard]] int steps_per_sample() const noexcept { return steps_per_sample_; }
    [[nodiscard]] double step_size() const noexcept { return cfg_.dt; }

    void set_state(const SimState& s);
    void set_optical_enabled(bool on);
    void set_paul_enabled(bool on);
    void set_schedule(Schedule s);
    void set_shim_voltage(const Vec3& v);
    void set_stray_field(const Vec3& e);
    void set_rf_amplitude(double v);
    /// Endcap and RF-electrode DC offset voltages.
    void set_dc_voltages(double endcap, double dc_offset);
    void set_pressure(double pascal);
    void set_drive(std::optional<DriveTone> tone);
    /// Moves the Paul trap centre linearly to `target` over `ramp` seconds of simulated time.
    void move_trap(const Vec3& target, double ramp);
    [[nodiscard]] const Vec3& trap_offset() const noexcept { return cfg_.paul.trap_offset; }

    /// Static equilibrium of the Paul trap including DC forces (secular approximation).
    [[nodiscard]] Vec3 paul_equilibrium() const;

    /// Draws position and velocity from the secular thermal distribution of the Paul trap at
    /// `temperature`, centred on the current equilibrium.
    void thermalize_in_paul_trap(double temperature);
    /// Separate temperatures for the u, v and z secular modes.
    void thermalize_in_paul_trap(const Vec3& mode_temperatures);
    /// Same for the harmonic expansion of the optical trap.
    void thermalize_in_optical_trap(double temperature);

    /// Advances by `duration` and returns the record (sample 0 is the first sample after start).
    TimeTrace run(double duration, const SampleHook& hook = {});
    /// Advances without recording.
    void advance(double duration);

private:
    void advance_samples(std::size_t samples, TimeTrace* out, const SampleHook* hook);
    void refresh_coefficients();
    [[nodiscard]] Vec3 actuation() const;
    [[nodiscard]] Vec3 total_force(const Vec3& r, double t);

    SimConfig cfg_;
    ParticleProperties particle_;
    std::uint64_t trial_ = 0;
    int steps_per_sample_ = 1;
    double gamma_ = 0.0;
    LangevinCoefficients coeff_;
    SimState state_;
    Controller controller_;
    Vec3 control_force_;
    Vec3 force_;
    bool force_valid_ = false;
    std::optional<DriveTone> drive_;
    Vec3 ramp_from_;
    Vec3 ramp_to_;
    double ramp_start_ = 0.0;
    double ramp_end_ = 0.0;
    bool ramping_ = false;
    double control_noise_sigma_ = 0.0;
    double record_noise_sigma_ = 0.0;
    PhiloxStream thermal_rng_;
    PhiloxStream control_rng_;
    PhiloxStream record_rng_;
    PhiloxStream init_rng_;
};

/// Runs a fresh simulation of `cfg` for `duration` from its configured initial state
/// (thermal in the Paul trap, or the optical trap when only that is enabled).
/// Throws ValidationError for duration <= 0.
TimeTrace simulate(const SimConfig& cfg, double duration, const SampleHook& hook = {});

}  // namespace hybridtrap
