#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridtrap/config.hpp"
#include "hybridtrap/rng.hpp"
#include "hybridtrap/vec3.hpp"

namespace hybridtrap {

struct SimState {
    Vec3 position;  // m
    Vec3 velocity;  // m/s
    double time = 0.0;  // s
};

/// Momentum damping rate (rad/s) from slip-corrected Stokes drag (Millikan-Cunningham).
double gas_damping_rate(const Environment& env, const ParticleSpec& particle);

/// Multichannel record sampled at a fixed rate. Channels are stored column-wise.
class TimeTrace {
public:
    TimeTrace() = default;
    TimeTrace(std::vector<std::string> names, std::vector<std::string> units, double sample_rate, double start_time = 0.0);

    [[nodiscard]] const std::vector<std::string>& names() const noexcept { return names_; }
    [[nodiscard]] const std::vector<std::string>& units() const noexcept { return units_; }
    [[nodiscard]] double sample_rate() const noexcept { return sample_rate_; }
    [[nodiscard]] double start_time() const noexcept { return start_time_; }
    [[nodiscard]] std::size_t size() const noexcept { return columns_.empty() ? 0 : columns_.front().size(); }
    [[nodiscard]] std::size_t channel_count() const noexcept { return names_.size(); }
    [[nodiscard]] double time_at(std::size_t i) const noexcept { return start_time_ + static_cast<double>(i) / sample_rate_; }

    /// Throws std::out_of_range for unknown names.
    [[nodiscard]] std::span<const double> channel(std::string_view name) const;
    [[nodiscard]] std::span<const double> channel(std::size_t index) const { return columns_.at(index); }
    [[nodiscard]] bool has_channel(std::string_view name) const noexcept;

    void reserve(std::size_t n);
    /// One value per channel, in channel order.
    void append(std::span<const double> row);
    void append_column(std::string name, std::string unit, std::vector<double> values);
    /// Samples [begin, end) of every channel.
    [[nodiscard]] TimeTrace slice(std::size_t begin, std::size_t end) const;
    /// Appends the samples of another trace with identical channel layout.
    void extend(const TimeTrace& other);
    void set_start_time(double t) noexcept { start_time_ = t; }

    friend bool operator==(const TimeTrace&, const TimeTrace&) = default;

private:
    std::vector<std::string> names_;
    std::vector<std::string> units_;
    double sample_rate_ = 1.0;
    double start_time_ = 0.0;
    std::vector<std::vector<double>> columns_;
};

/// Exact Ornstein-Uhlenbeck coefficients for one step of length dt.
struct LangevinCoefficients {
    double dt = 0.0;
    double inv_mass = 0.0;
    double decay = 1.0;     // exp(-gamma dt)
    double kick_sigma = 0.0;  // sqrt(kT/m (1 - exp(-2 gamma dt)))
};

LangevinCoefficients langevin_coefficients(double gamma, double temperature, double mass, double dt);

namespace detail {

/// B-A-O-A-B splitting. `force` holds F(x_n, t_n) on entry and F(x_{n+1}, t_{n+1}) on exit.
template <class ForceAt, class Normal>
inline void baoab_step(SimState& s, Vec3& force, const LangevinCoefficients& k, ForceAt&& force_at, Normal&& normal) {
    const double half = 0.5 * k.dt;
    s.velocity += force * (half * k.inv_mass);
    s.position += s.velocity * half;
    if (k.kick_sigma > 0.0) {
        s.velocity = s.velocity * k.decay + Vec3{normal(), normal(), normal()} * k.kick_sigma;
    } else {
        s.velocity *= k.decay;
    }
    s.position += s.velocity * half;
    s.time += k.dt;
    force = force_at(s.position, s.time);
    s.velocity += force * (half * k.inv_mass);
}

}  // namespace detail

/// One integrator step under the trap forces of `cfg` plus a constant controller force.
/// Throws IntegrationError when the new state is not finite.
SimState step(const SimState& state, const SimConfig& cfg, const Vec3& controller_force, PhiloxStream& rng);

}  // namespace hybridtrap
