#pragma once

#include <cmath>
#include <span>

#include "hybridtrap/config.hpp"
#include "hybridtrap/rng.hpp"
#include "hybridtrap/vec3.hpp"

namespace hybridtrap {

/// Noiseless forward-scattering detector voltages for a particle at `position`.
///
/// Each channel is S0_i * h(d_i) * G(d) with d the offset from the measurement focus,
/// h(d) = (2 L / pi) sin(pi d / (2 L)) and G = exp(-2 (dx^2 + dy^2) / w_m^2). The local
/// slope dh/dd = cos(pi d / (2 L)) is one at the focus and changes sign near d = L
/// (L = inversion length), which reproduces the interference sign flip of the x sensitivity.
Vec3 detector_response(const Vec3& position, const DetectorConfig& det);

/// d(channel x)/dx at `position`, in V/m.
double local_x_sensitivity(const Vec3& position, const DetectorConfig& det);

/// Per-sample white-noise standard deviation for a detector sampled at `rate`.
inline double detector_noise_sigma(const DetectorConfig& det, double rate) { return det.noise_floor * std::sqrt(0.5 * rate); }

/// Detector voltages plus white Gaussian noise at the configured floor for a given sample rate.
Vec3 detector_sample(const Vec3& position, const DetectorConfig& det, double rate, PhiloxStream& rng);

struct DemodResult {
    double amplitude = 0.0;  // same unit as the input signal
    double phase = 0.0;      // rad, for a signal A cos(2 pi f t + phase)
    double frequency = 0.0;  // Hz

    /// Component in phase with cos(2 pi f t).
    [[nodiscard]] double in_phase() const { return amplitude * std::cos(phase); }
};

/// Lock-in demodulation: mixes with cos/sin at f_ref, applies a two-pole low-pass at
/// `bandwidth`, discards the first five time constants and averages the rest.
/// `start_time` is the time of sample 0, so phases refer to absolute time.
/// Throws ValidationError when f_ref >= Nyquist, bandwidth >= f_ref or the signal is shorter than 5/bandwidth.
DemodResult demodulate(std::span<const double> signal, double sample_rate, double f_ref, double bandwidth,
                       double start_time = 0.0);

}  // namespace hybridtrap
