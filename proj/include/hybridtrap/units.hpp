#pragma once

#include <numbers>

// SI internally. Conversion helpers cover the units used in config files.
namespace hybridtrap::units {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double boltzmann = 1.380649e-23;           // J/K
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double standard_gravity = 9.80665;         // m/s^2

inline constexpr double pascal_per_mbar = 100.0;
inline constexpr double joule_per_ev = elementary_charge;

constexpr double mbar(double p) { return p * pascal_per_mbar; }
constexpr double to_mbar(double pa) { return pa / pascal_per_mbar; }
constexpr double ev(double e) { return e * joule_per_ev; }
constexpr double to_ev(double j) { return j / joule_per_ev; }
constexpr double nm(double l) { return l * 1e-9; }
constexpr double um(double l) { return l * 1e-6; }
constexpr double khz(double f) { return f * 1e3; }
/// Angular frequency from a frequency given in kHz.
constexpr double rad_per_s_from_khz(double f) { return two_pi * f * 1e3; }

}  // namespace hybridtrap::units
