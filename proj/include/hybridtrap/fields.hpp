#pragma once

#include <array>

#include "hybridtrap/config.hpp"
#include "hybridtrap/vec3.hpp"

namespace hybridtrap {

// ---------------------------------------------------------------------------
// Optical tweezer (Gaussian focus)
// ---------------------------------------------------------------------------

/// Waists and Rayleigh range reproducing the given angular trap frequencies at depth U0
/// for a particle of the given mass: w = sqrt(4 U0 / (m w_i^2)), z_R = sqrt(2 U0 / (m w_z^2)).
OpticalTrapConfig derive_optical_geometry(const Vec3& angular_frequencies, double depth, double mass);

/// Harmonic angular frequencies about the focus.
Vec3 optical_frequencies(const OpticalTrapConfig& cfg, double mass);

/// Trap potential, zero at infinity and -U0 at the focus.
double optical_potential(const Vec3& r, const OpticalTrapConfig& cfg);

/// Analytic -grad U plus the intensity-weighted scattering push along +z.
Vec3 optical_force(const Vec3& r, const OpticalTrapConfig& cfg);

/// Boltzmann averages <x^2>, <y^2>, <z^2> (m^2) of a particle in the well at `temperature`,
/// by grid quadrature over +-8 harmonic widths (scattering push ignored). Equals
/// k_B T / (m w_i^2) when the Duffing terms are disabled.
Vec3 optical_thermal_variance(const OpticalTrapConfig& cfg, double temperature, double mass);

// ---------------------------------------------------------------------------
// Linear Paul trap (wheel geometry, RF axes u/v rotated 45 degrees from x/y)
// ---------------------------------------------------------------------------

/// Electric field at lab position r and time t. Includes RF quadrupole, DC offset quadrupole,
/// endcap field, shim fields and the configured uniform stray field.
Vec3 paul_field(const Vec3& r, double t, const PaulTrapConfig& cfg);

/// RF-only part of paul_field (oscillating quadrupole), for characterisation and tests.
Vec3 paul_rf_field(const Vec3& r, double t, const PaulTrapConfig& cfg);

/// Coulomb force Q E(r, t).
Vec3 paul_force(const Vec3& r, double t, const PaulTrapConfig& cfg, double charge);

struct MathieuParameters {
    double a_u = 0.0;
    double q_u = 0.0;
    double a_v = 0.0;
    double q_v = 0.0;
    double a_z = 0.0;
};

MathieuParameters mathieu_parameters(const PaulTrapConfig& cfg, const ParticleProperties& particle);

/// Secular angular frequencies (u, v, z) in rad/s from the second-order continued-fraction
/// expansion of the Mathieu characteristic exponent; reduces to (Omega/2) sqrt(a + q^2/2)
/// for small q. Throws IntegrationError when an axis is Mathieu-unstable.
Vec3 secular_frequencies(const PaulTrapConfig& cfg, const ParticleProperties& particle);

/// Characteristic exponent beta (in units of Omega/2) from the same expansion.
double secular_beta(double a, double q);

struct FloquetResult {
    bool stable = false;
    double monodromy_trace = 0.0;
    /// beta in units of Omega/2; NaN when unstable.
    double beta = 0.0;
    /// Monodromy matrix over one drive period, row-major [[u, u'], ...].
    std::array<double, 4> monodromy{};
};

/// Integrates u'' + (a - 2 q cos 2 tau) u = 0 over one period (tau in [0, pi]) for two
/// independent initial conditions. Stable iff |trace| < 2. Refines the RK4 step until
/// the trace converges; throws IntegrationError otherwise.
FloquetResult floquet_stability(double a, double q);

/// Angular frequency (rad/s) from a Floquet exponent and the drive.
inline double secular_frequency_from_beta(double beta, double drive_frequency) { return beta * drive_frequency / 2.0; }

/// Harmonic extrapolation of the secular potential to the electrode tips, minimum over the
/// radial axes: D = m w^2 r0^2 / 2 (J). Throws IntegrationError when a radial axis is unstable.
double pseudopotential_depth(const PaulTrapConfig& cfg, const ParticleProperties& particle);

// ---------------------------------------------------------------------------
// Combined
// ---------------------------------------------------------------------------

/// All conservative and field forces acting on the particle (no damping, noise, or feedback).
Vec3 trap_force(const Vec3& r, double t, const SimConfig& cfg, const ParticleProperties& particle);

}  // namespace hybridtrap
