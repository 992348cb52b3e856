#include "hybridtrap/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

#include "hybridtrap/config.hpp"
#include "hybridtrap/errors.hpp"
#include "hybridtrap/fields.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

double gas_damping_rate(const Environment& env, const ParticleSpec& particle) {
    if (!(env.pressure > 0.0)) return 0.0;
    const double mass = derive_particle_properties(particle).mass;
    const double d = env.gas_molecule_diameter;
    const double mean_free_path =
        units::boltzmann * env.gas_temperature / (std::sqrt(2.0) * units::pi * d * d * env.pressure);
    const double kn = mean_free_path / particle.radius;
    const double ck = 0.31 * kn / (0.785 + 1.152 * kn + kn * kn);
    const double stokes = 6.0 * units::pi * env.gas_viscosity * particle.radius / mass;
    return stokes * 0.619 / (0.619 + kn) * (1.0 + ck);
}

TimeTrace::TimeTrace(std::vector<std::string> names, std::vector<std::string> units, double sample_rate,
                     double start_time)
    : names_(std::move(names)), units_(std::move(units)), sample_rate_(sample_rate), start_time_(start_time),
      columns_(names_.size()) {
    if (units_.size() != names_.size()) throw std::invalid_argument("TimeTrace: names and units differ in length");
    if (!(sample_rate_ > 0.0)) throw std::invalid_argument("TimeTrace: sample_rate must be > 0");
}

std::span<const double> TimeTrace::channel(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw std::out_of_range("TimeTrace: no channel '" + std::string(name) + "'");
    return columns_[static_cast<std::size_t>(it - names_.begin())];
}

bool TimeTrace::has_channel(std::string_view name) const noexcept {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

void TimeTrace::reserve(std::size_t n) {
    for (auto& c : columns_) c.reserve(n);
}

void TimeTrace::append(std::span<const double> row) {
    if (row.size() != columns_.size()) throw std::invalid_argument("TimeTrace: row width mismatch");
    for (std::size_t i = 0; i < row.size(); ++i) columns_[i].push_back(row[i]);
}

void TimeTrace::append_column(std::string name, std::string unit, std::vector<double> values) {
    if (!columns_.empty() && values.size() != size()) throw std::invalid_argument("TimeTrace: column length mismatch");
    names_.push_back(std::move(name));
    units_.push_back(std::move(unit));
    columns_.push_back(std::move(values));
}

TimeTrace TimeTrace::slice(std::size_t begin, std::size_t end) const {
    end = std::min(end, size());
    begin = std::min(begin, end);
    TimeTrace out(names_, units_, sample_rate_, time_at(begin));
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        out.columns_[c].assign(columns_[c].begin() + static_cast<std::ptrdiff_t>(begin),
                               columns_[c].begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

void TimeTrace::extend(const TimeTrace& other) {
    if (other.names_ != names_) throw std::invalid_argument("TimeTrace: channel layout mismatch");
    if (size() == 0) start_time_ = other.start_time_;
    for (std::size_t c = 0; c < columns_.size(); ++c) {
        columns_[c].insert(columns_[c].end(), other.columns_[c].begin(), other.columns_[c].end());
    }
}

LangevinCoefficients langevin_coefficients(double gamma, double temperature, double mass, double dt) {
    LangevinCoefficients k;
    k.dt = dt;
    k.inv_mass = 1.0 / mass;
    k.decay = std::exp(-gamma * dt);
    const double variance = units::boltzmann * temperature / mass * -std::expm1(-2.0 * gamma * dt);
    k.kick_sigma = variance > 0.0 ? std::sqrt(variance) : 0.0;
    return k;
}

SimState step(const SimState& state, const SimConfig& cfg, const Vec3& controller_force, PhiloxStream& rng) {
    const auto particle = derive_particle_properties(cfg.particle);
    const double gamma = gas_damping_rate(cfg.environment, cfg.particle);
    const auto k = langevin_coefficients(gamma, cfg.environment.gas_temperature, particle.mass, cfg.dt);
    auto force_at = [&](const Vec3& r, double t) { return trap_force(r, t, cfg, particle) + controller_force; };
    boost::random::normal_distribution<double> normal;
    auto draw = [&] { return normal(rng); };
    SimState next = state;
    Vec3 force = force_at(state.position, state.time);
    detail::baoab_step(next, force, k, force_at, draw);
    if (!is_finite(next.position) || !is_finite(next.velocity)) {
        std::ostringstream os;
        os << "non-finite state after step at t=" << state.time << " s";
        throw IntegrationError(os.str());
    }
    return next;
}

}  // namespace hybridtrap
