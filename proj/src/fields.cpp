#include "hybridtrap/fields.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "hybridtrap/errors.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

OpticalTrapConfig derive_optical_geometry(const Vec3& angular_frequencies, double depth, double mass) {
    if (!(depth > 0.0) || !(mass > 0.0) || !(angular_frequencies.x > 0.0) || !(angular_frequencies.y > 0.0) ||
        !(angular_frequencies.z > 0.0)) {
        throw ValidationError("optical geometry needs positive frequencies, depth and mass");
    }
    OpticalTrapConfig cfg;
    cfg.depth = depth;
    cfg.waist_x = std::sqrt(4.0 * depth / (mass * angular_frequencies.x * angular_frequencies.x));
    cfg.waist_y = std::sqrt(4.0 * depth / (mass * angular_frequencies.y * angular_frequencies.y));
    cfg.rayleigh_range = std::sqrt(2.0 * depth / (mass * angular_frequencies.z * angular_frequencies.z));
    return cfg;
}

Vec3 optical_frequencies(const OpticalTrapConfig& cfg, double mass) {
    return {std::sqrt(4.0 * cfg.depth / (mass * cfg.waist_x * cfg.waist_x)),
            std::sqrt(4.0 * cfg.depth / (mass * cfg.waist_y * cfg.waist_y)),
            std::sqrt(2.0 * cfg.depth / (mass * cfg.rayleigh_range * cfg.rayleigh_range))};
}

double optical_potential(const Vec3& r, const OpticalTrapConfig& cfg) {
    if (!cfg.duffing_enabled) {
        const double kx = 4.0 * cfg.depth / (cfg.waist_x * cfg.waist_x);
        const double ky = 4.0 * cfg.depth / (cfg.waist_y * cfg.waist_y);
        const double kz = 2.0 * cfg.depth / (cfg.rayleigh_range * cfg.rayleigh_range);
        return -cfg.depth + 0.5 * (kx * r.x * r.x + ky * r.y * r.y + kz * r.z * r.z);
    }
    const double zeta = r.z / cfg.rayleigh_range;
    const double s = 1.0 + zeta * zeta;
    const double rho = r.x * r.x / (cfg.waist_x * cfg.waist_x) + r.y * r.y / (cfg.waist_y * cfg.waist_y);
    return -cfg.depth / s * std::exp(-2.0 * rho / s);
}

Vec3 optical_force(const Vec3& r, const OpticalTrapConfig& cfg) {
    if (!cfg.duffing_enabled) {
        const double kx = 4.0 * cfg.depth / (cfg.waist_x * cfg.waist_x);
        const double ky = 4.0 * cfg.depth / (cfg.waist_y * cfg.waist_y);
        const double kz = 2.0 * cfg.depth / (cfg.rayleigh_range * cfg.rayleigh_range);
        return {-kx * r.x, -ky * r.y, -kz * r.z + cfg.scattering_force};
    }
    const double wx2 = cfg.waist_x * cfg.waist_x;
    const double wy2 = cfg.waist_y * cfg.waist_y;
    const double zr2 = cfg.rayleigh_range * cfg.rayleigh_range;
    const double s = 1.0 + r.z * r.z / zr2;
    const double inv_s = 1.0 / s;
    const double rho = r.x * r.x / wx2 + r.y * r.y / wy2;
    const double intensity = inv_s * std::exp(-2.0 * rho * inv_s);  // relative to the focus
    const double u = -cfg.depth * intensity;
    return {u * 4.0 * r.x * inv_s / wx2, u * 4.0 * r.y * inv_s / wy2,
            -u * (2.0 * r.z * inv_s / zr2) * (2.0 * rho * inv_s - 1.0) + cfg.scattering_force * intensity};
}

Vec3 optical_thermal_variance(const OpticalTrapConfig& cfg, double temperature, double mass) {
    if (!(temperature > 0.0) || !(mass > 0.0) || !(cfg.depth > 0.0)) {
        throw ValidationError("optical_thermal_variance needs positive temperature, mass and depth");
    }
    const double kt = units::boltzmann * temperature;
    const Vec3 w = optical_frequencies(cfg, mass);
    if (!cfg.duffing_enabled) return {kt / (mass * w.x * w.x), kt / (mass * w.y * w.y), kt / (mass * w.z * w.z)};

    constexpr int n = 121;
    constexpr double half_span = 8.0;
    Vec3 h;
    for (int k = 0; k < 3; ++k) h[k] = 2.0 * half_span * std::sqrt(kt / mass) / w[k] / (n - 1);
    double norm = 0.0;
    Vec3 second{};
    for (int iz = 0; iz < n; ++iz) {
        const double z = (iz - (n - 1) / 2) * h.z;
        for (int iy = 0; iy < n; ++iy) {
            const double y = (iy - (n - 1) / 2) * h.y;
            for (int ix = 0; ix < n; ++ix) {
                const double x = (ix - (n - 1) / 2) * h.x;
                const double p = std::exp(-(optical_potential({x, y, z}, cfg) + cfg.depth) / kt);
                norm += p;
                second += Vec3{x * x, y * y, z * z} * p;
            }
        }
    }
    return second * (1.0 / norm);
}

namespace {

// Quadrupole strength (V) multiplying (u^2 - v^2) / (2 r0^2) in -Phi; u = (x+y)/sqrt2, v = (y-x)/sqrt2,
// so u^2 - v^2 = 2 x y.
inline Vec3 quadrupole_field(const Vec3& d, double strength, double r0) {
    const double k = strength / (r0 * r0);
    return {k * d.y, k * d.x, 0.0};
}

}  // namespace

Vec3 paul_rf_field(const Vec3& r, double t, const PaulTrapConfig& cfg) {
    if (!cfg.enabled) return {};
    const Vec3 d = r - cfg.trap_offset;
    return quadrupole_field(d, cfg.rf_efficiency * cfg.rf_amplitude * std::cos(cfg.drive_frequency * t), cfg.tip_distance);
}

Vec3 paul_field(const Vec3& r, double t, const PaulTrapConfig& cfg) {
    Vec3 e = hadamard(cfg.shim_gain, cfg.shim_voltage) + cfg.stray_field;
    if (!cfg.enabled) return e;
    const Vec3 d = r - cfg.trap_offset;
    const double strength =
        cfg.rf_efficiency * cfg.rf_amplitude * std::cos(cfg.drive_frequency * t) + cfg.dc_offset_gain * cfg.dc_offset;
    e += quadrupole_field(d, strength, cfg.tip_distance);
    const double cap = cfg.endcap_efficiency * cfg.endcap_voltage / (cfg.endcap_distance * cfg.endcap_distance);
    e += Vec3{cap * d.x, cap * d.y, -2.0 * cap * d.z};
    return e;
}

Vec3 paul_force(const Vec3& r, double t, const PaulTrapConfig& cfg, double charge) {
    return paul_field(r, t, cfg) * charge;
}

MathieuParameters mathieu_parameters(const PaulTrapConfig& cfg, const ParticleProperties& particle) {
    const double qm = particle.charge / particle.mass;
    const double w2 = cfg.drive_frequency * cfg.drive_frequency;
    const double r02 = cfg.tip_distance * cfg.tip_distance;
    const double z02 = cfg.endcap_distance * cfg.endcap_distance;
    MathieuParameters m;
    m.a_z = 8.0 * qm * cfg.endcap_efficiency * cfg.endcap_voltage / (z02 * w2);
    const double a_off = 4.0 * qm * cfg.dc_offset_gain * cfg.dc_offset / (r02 * w2);
    m.q_u = 2.0 * qm * cfg.rf_efficiency * cfg.rf_amplitude / (r02 * w2);
    m.q_v = -m.q_u;
    m.a_u = -0.5 * m.a_z - a_off;
    m.a_v = -0.5 * m.a_z + a_off;
    return m;
}

double secular_beta(double a, double q) {
    const double am1 = a - 1.0;
    const double q2 = q * q;
    const double beta2 = a - am1 * q2 / (2.0 * am1 * am1 - q2) - (5.0 * a + 7.0) * q2 * q2 / (32.0 * am1 * am1 * am1 * (a - 4.0));
    return beta2 > 0.0 ? std::sqrt(beta2) : std::numeric_limits<double>::quiet_NaN();
}

namespace {

double axis_frequency(double a, double q, int axis, double drive_frequency) {
    if (!floquet_stability(a, q).stable) {
        static constexpr const char* names[] = {"u", "v", "z"};
        std::ostringstream os;
        os << "Mathieu-unstable along " << names[axis] << " (a=" << a << ", q=" << q << ")";
        throw IntegrationError(os.str());
    }
    return secular_frequency_from_beta(secular_beta(a, q), drive_frequency);
}

}  // namespace

Vec3 secular_frequencies(const PaulTrapConfig& cfg, const ParticleProperties& particle) {
    const auto m = mathieu_parameters(cfg, particle);
    return {axis_frequency(m.a_u, m.q_u, 0, cfg.drive_frequency), axis_frequency(m.a_v, m.q_v, 1, cfg.drive_frequency),
            axis_frequency(m.a_z, 0.0, 2, cfg.drive_frequency)};
}

namespace {

std::array<double, 4> monodromy_rk4(double a, double q, int steps) {
    // Columns: solutions with (u, u') = (1, 0) and (0, 1).
    std::array<double, 4> out{};
    const double h = units::pi / steps;
    for (int col = 0; col < 2; ++col) {
        double u = col == 0 ? 1.0 : 0.0;
        double p = col == 0 ? 0.0 : 1.0;
        auto acc = [a, q](double tau, double x) { return -(a - 2.0 * q * std::cos(2.0 * tau)) * x; };
        for (int i = 0; i < steps; ++i) {
            const double tau = i * h;
            const double k1u = p, k1p = acc(tau, u);
            const double k2u = p + 0.5 * h * k1p, k2p = acc(tau + 0.5 * h, u + 0.5 * h * k1u);
            const double k3u = p + 0.5 * h * k2p, k3p = acc(tau + 0.5 * h, u + 0.5 * h * k2u);
            const double k4u = p + h * k3p, k4p = acc(tau + h, u + h * k3u);
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        }
        out[static_cast<std::size_t>(col)] = u;
        out[static_cast<std::size_t>(2 + col)] = p;
    }
    return out;
}

}  // namespace

FloquetResult floquet_stability(double a, double q) {
    if (!std::isfinite(a) || !std::isfinite(q)) throw ValidationError("Mathieu parameters must be finite");
    constexpr int min_steps = 256;
    constexpr int max_steps = 1 << 20;
    auto previous = monodromy_rk4(a, q, min_steps);
    for (int n = 2 * min_steps; n <= max_steps; n *= 2) {
        auto current = monodromy_rk4(a, q, n);
        const double tr_prev = previous[0] + previous[3];
        const double tr = current[0] + current[3];
        if (std::abs(tr - tr_prev) <= 1e-11 * std::max(1.0, std::abs(tr))) {
            FloquetResult r;
            r.monodromy = current;
            r.monodromy_trace = tr;
            r.stable = std::abs(tr) < 2.0;
            r.beta = r.stable ? std::acos(0.5 * tr) / units::pi : std::numeric_limits<double>::quiet_NaN();
            return r;
        }
        previous = current;
    }
    std::ostringstream os;
    os << "Floquet integration did not converge for a=" << a << ", q=" << q << " at " << max_steps << " steps per period";
    throw IntegrationError(os.str());
}

double pseudopotential_depth(const PaulTrapConfig& cfg, const ParticleProperties& particle) {
    const auto m = mathieu_parameters(cfg, particle);
    const double w_min = std::min(axis_frequency(m.a_u, m.q_u, 0, cfg.drive_frequency),
                                  axis_frequency(m.a_v, m.q_v, 1, cfg.drive_frequency));
    return 0.5 * particle.mass * w_min * w_min * cfg.tip_distance * cfg.tip_distance;
}

Vec3 trap_force(const Vec3& r, double t, const SimConfig& cfg, const ParticleProperties& particle) {
    Vec3 f = paul_force(r, t, cfg.paul, particle.charge) + cfg.environment.gravity * particle.mass;
    if (cfg.optical.enabled) f += optical_force(r, cfg.optical);
    return f;
}

}  // namespace hybridtrap
