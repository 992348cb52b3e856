#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "hybridtrap/config.hpp"
#include "hybridtrap/protocol.hpp"

namespace hybridtrap {

/// Swept quantity. Values are given in display units: pressure in mbar, offset_x in nm (Paul
/// trap centre relative to the optical focus), gain as a factor on both configured feedback gains.
enum class SweepParameter { pressure, offset_x, gain };

std::string to_string(SweepParameter p);
SweepParameter sweep_parameter_from_string(const std::string& name);
/// Column header for the value column, e.g. "pressure[mbar]".
std::string value_header(SweepParameter p);

struct SweepSpec {
    SweepParameter parameter = SweepParameter::pressure;
    std::vector<double> values;
    int trials = 1;
    bool feedback = true;
    ExperimentConfig base;
    std::string output;  // prefix for <output>_trials.csv and <output>_summary.csv; empty = none
};

/// Throws ValidationError for trials < 1, an empty or non-finite value list, or a point whose
/// derived configuration is invalid.
void validate_sweep(const SweepSpec& spec);

/// Configuration of one sweep point.
ExperimentConfig apply_sweep_value(const ExperimentConfig& base, SweepParameter p, double value);

/// RNG trial index of (point, trial); unique within a sweep.
inline std::uint64_t trial_index(std::size_t point, int trial, int trials_per_point) {
    return static_cast<std::uint64_t>(point) * static_cast<std::uint64_t>(trials_per_point) + static_cast<std::uint64_t>(trial);
}

struct TrialRecord {
    std::size_t point = 0;
    double value = 0.0;
    int trial = 0;
    std::uint64_t index = 0;
    bool success = false;
    bool spectral_success = false;
    bool diverged = false;
    Occupancy occupancy = Occupancy::paul;
    double pre_paul_power = 0.0;     // V^2
    double post_paul_power = 0.0;    // V^2
    double post_optical_power = 0.0; // V^2
    double paul_peak_ratio = 0.0;
    double optical_peak_ratio = 0.0;
    double rms_before = 0.0;  // m
    std::string error;

    friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`:
/// centre (k + z^2/2)/(n + z^2), half-width z sqrt(k(n-k)/n + z^2/4)/(n + z^2).
Interval wilson_interval(int successes, int trials, double z = 1.96);

struct PointSummary {
    double value = 0.0;
    int trials = 0;
    int successes = 0;
    int diverged = 0;
    double rate = 0.0;
    Interval ci;

    friend bool operator==(const PointSummary& a, const PointSummary& b) {
        return a.value == b.value && a.trials == b.trials && a.successes == b.successes && a.diverged == b.diverged &&
               a.rate == b.rate && a.ci.lo == b.ci.lo && a.ci.hi == b.ci.hi;
    }
};

struct SweepResult {
    SweepParameter parameter = SweepParameter::pressure;
    std::vector<PointSummary> points;
    std::vector<TrialRecord> trials;  // ordered by (point, trial)
};

/// One transfer attempt of the sweep: fresh simulation with stream trial_index(point, trial),
/// precooled (or thermal without feedback), then transfer_attempt.
TrialRecord run_trial(const SweepSpec& spec, std::size_t point, int trial);

/// Per-point counts, rates and Wilson intervals recomputed from trial rows.
std::vector<PointSummary> summarise(const SweepSpec& spec, const std::vector<TrialRecord>& trials);

/// Reference implementation: trials one after another.
SweepResult run_sweep_serial(const SweepSpec& spec);
/// Trials distributed over `threads` OpenMP workers; same result as the serial version.
SweepResult run_sweep_parallel(const SweepSpec& spec, int threads);
/// Serial for threads <= 1, parallel otherwise. Writes the CSV files when spec.output is set.
SweepResult run_sweep(const SweepSpec& spec, int threads);

/// HYBRIDTRAP_THREADS when set to a positive integer, otherwise the OpenMP default.
int default_parallelism();

/// Header row then one row per trial: value, point, trial, index, success, spectral_success,
/// occupancy, diverged, band powers (V^2), peak ratios, rms_before (nm), error.
void write_trials_csv(const SweepResult& result, std::ostream& out);
/// Header row then one row per point: value, trials, successes, diverged, rate, ci_lo, ci_hi.
void write_summary_csv(const SweepResult& result, std::ostream& out);
void write_trials_csv(const std::string& path, const SweepResult& result);
void write_summary_csv(const std::string& path, const SweepResult& result);

/// n points from lo to hi inclusive, evenly spaced in log10.
std::vector<double> log_grid(double lo, double hi, int n);
/// n points from lo to hi inclusive.
std::vector<double> linear_grid(double lo, double hi, int n);

}  // namespace hybridtrap
