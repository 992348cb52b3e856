#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hybridtrap/config.hpp"

namespace hybridtrap {

enum class Window { hann, rectangular };

std::string to_string(Window w);
Window window_from_string(const std::string& name);

/// One-sided power spectral density.
struct Psd {
    std::vector<double> frequencies;  // Hz
    std::vector<double> density;      // unit^2 / Hz
    std::size_t segment_length = 0;   // samples
    Window window = Window::hann;

    [[nodiscard]] double resolution() const { return frequencies.size() > 1 ? frequencies[1] - frequencies[0] : 0.0; }
};

/// Welch estimate: mean-removed, windowed segments overlapping by `overlap` (fraction in [0, 1)),
/// averaged periodograms with density normalisation so that the integral equals the variance.
/// Throws ValidationError when the segment is longer than the signal or shorter than 2 samples.
Psd welch_psd(std::span<const double> signal, double sample_rate, std::size_t segment_length, double overlap = 0.5,
              Window window = Window::hann);

/// Segment length in samples for a duration at a sample rate.
std::size_t segment_samples(double duration, double sample_rate);

/// Trapezoidal integral of the density over [f_lo, f_hi], interpolating at the band edges.
/// Throws ValidationError for inverted bands or bands outside the PSD range.
double band_power(const Psd& psd, double f_lo, double f_hi);

struct BandPeak {
    double peak = 0.0;        // largest density in band
    double median = 0.0;      // median density in band
    double frequency = 0.0;   // Hz, location of the peak
    [[nodiscard]] double ratio() const { return median > 0.0 ? peak / median : 0.0; }
};

/// Largest bin and median of the bins inside [f_lo, f_hi].
BandPeak band_peak(const Psd& psd, double f_lo, double f_hi);

struct LorentzianFit {
    double f0 = 0.0;         // Hz
    double linewidth = 0.0;  // Hz, full width of the damped-oscillator line (gamma / 2 pi)
    double area = 0.0;       // integral of the oscillator line, unit^2
    double background = 0.0; // unit^2 / Hz
    Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();  // (f0, linewidth, area, background)
    int iterations = 0;
};

/// Damped-oscillator line shape used by the fit:
/// S(f) = area * (2/pi) * f0^2 * g / ((f0^2 - f^2)^2 + g^2 f^2) + background, g = linewidth.
double oscillator_psd(double f, double f0, double linewidth, double area, double background);

/// Unweighted Levenberg-Marquardt fit of oscillator_psd to the PSD bins within
/// `span` * f_guess of `f_guess` (default +-30 %). Throws AnalysisError when no peak is
/// found or the fit does not converge.
LorentzianFit lorentzian_fit(const Psd& psd, double f_guess, double span = 0.3);

struct CalibrationResult {
    double factor = 0.0;     // m/V
    double f0 = 0.0;         // Hz
    double linewidth = 0.0;  // Hz
    Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero();
};

/// Converts detector volts to metres from the thermal peak near `f_guess`: the fitted line area
/// (V^2) is matched to k_B T / (m (2 pi f0)^2). Throws AnalysisError when the peak does not
/// stand at least 10x above the fitted background.
CalibrationResult calibrate(std::span<const double> signal, double sample_rate, double temperature, double mass,
                            double f_guess, std::size_t segment_length);

}  // namespace hybridtrap
