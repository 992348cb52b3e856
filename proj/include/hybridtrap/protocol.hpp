#pragma once

#include <string>
#include <vector>

#include "hybridtrap/analysis.hpp"
#include "hybridtrap/config.hpp"
#include "hybridtrap/simulation.hpp"

namespace hybridtrap {

enum class Occupancy { optical, paul, lost };

std::string to_string(Occupancy o);

struct StepRecord {
    std::string name;
    double time = 0.0;  // s, relative to the moment the optical trap is switched on
};

/// Band powers and peak-to-median ratios of one detector channel.
struct SpectralSummary {
    double paul_power = 0.0;     // V^2
    double optical_power = 0.0;  // V^2
    BandPeak paul_peak;
    BandPeak optical_peak;
};

struct SuccessEvaluation {
    bool success = false;
    SpectralSummary spectrum;
};

/// Welch PSD of `channel` over the whole of `window`; success iff the optical-band peak is at
/// least optical_peak_threshold x its band median and the Paul-band peak is below
/// paul_peak_threshold x its median. Throws ValidationError when the window is shorter than one segment.
SuccessEvaluation evaluate_success(const TimeTrace& window, const ProtocolConfig& cfg, const std::string& channel = "qpd_x");

struct TransferOutcome {
    /// Spectral success and the particle actually resting in the optical well.
    bool success = false;
    bool spectral_success = false;
    /// The integrator failed; distinct from an ordinary failed transfer.
    bool diverged = false;
    std::string error;
    std::vector<StepRecord> steps;
    SpectralSummary pre;   // before the optical trap is switched on
    SpectralSummary post;  // evaluation window
    Occupancy occupancy = Occupancy::paul;
    double rms_before = 0.0;  // m, true x RMS before the transfer
    TimeTrace trace;          // whole attempt, t = 0 at step (ii); empty unless requested
};

/// Steady-state (u, v, z) temperatures under gas damping plus Paul-schedule cold damping
/// (plain gas temperature without feedback).
Vec3 precool_temperatures(const SimConfig& cfg, bool feedback);

/// Draws the pre-transfer state: thermal in the Paul trap at the precool temperatures, optical
/// trap off, Paul-schedule feedback on when `feedback` is set.
void prepare_precooled(Simulation& sim, bool feedback);

/// Steps (i)-(iv): Paul-schedule feedback off and optical trap on at t = 0, optical-schedule
/// feedback on after feedback_delay (only when `feedback`), evaluation window after
/// evaluation_delay. The Paul trap stays on throughout. Divergence is reported in the outcome.
TransferOutcome transfer_attempt(Simulation& sim, const ProtocolConfig& cfg, bool feedback = true, bool keep_trace = true);

/// Minimises the RF micromotion (lock-in at the drive frequency on qpd_x, qpd_y) over the x and
/// y shims and the endcap-modulation response (qpd_z) over the z shim by coordinate descent with
/// parabolic steps. Leaves the result applied and returns it. Throws AnalysisError on non-convergence.
Vec3 compensate_stray_fields(Simulation& sim, const ProtocolConfig& cfg);

/// Lock-in amplitude of the micromotion at the drive frequency, sqrt(A_x^2 + A_y^2) in V.
double micromotion_amplitude(Simulation& sim, const ProtocolConfig& cfg);

/// Scans the trap position about its current value along each axis with a shim tone on that axis
/// and returns the offset that maximises the detector response (quadratic refinement); moves the
/// trap there. Throws AnalysisError when the response never rises above the noise.
Vec3 align_traps(Simulation& sim, const ProtocolConfig& cfg);

/// Optical beam and feedback off; waits in chunks until at least recovery_linear_fraction of the
/// qpd_x power lies in the Paul band, then re-enables Paul-schedule feedback. Returns the wait
/// in seconds. Throws AnalysisError after recovery_timeout / gamma and IntegrationError if the
/// particle leaves the trap.
double recover_after_failure(Simulation& sim, const ProtocolConfig& cfg);

/// Row-major map over `xs` x `ys`: value(ix, iy) = data[iy * xs.size() + ix].
template <class T>
struct GridMap {
    std::vector<double> xs;  // m
    std::vector<double> ys;  // m
    std::vector<T> data;
    [[nodiscard]] const T& at(std::size_t ix, std::size_t iy) const { return data[iy * xs.size() + ix]; }
};

/// In-phase lock-in response of qpd_x (V) to an x-shim tone with the trap centre placed at each
/// (x, y) grid offset, then returns the trap to where it started. Throws ValidationError when the
/// grid exceeds the stage range.
GridMap<double> map_detection_sensitivity(Simulation& sim, const ProtocolConfig& cfg, const std::vector<double>& xs,
                                          const std::vector<double>& ys);

struct FieldMap {
    GridMap<Vec3> measured;  // V/m, RF amplitude at the particle (z component unused)
    GridMap<Vec3> analytic;  // V/m, ideal quadrupole at the same positions
    double residual = 0.0;   // RMS |measured - analytic| / RMS |analytic| within 100 um of the null
    CalibrationResult calibration_x;
    CalibrationResult calibration_y;
};

/// Calibrates the x and y detector channels on the thermal motion at calibration pressure with
/// only the optical trap on (line fit for f0 and width; factor from the channel variance against
/// optical_thermal_variance). Then holds the particle in the optical trap, turns the RF on at
/// map_rf_amplitude with the DC electrodes grounded, moves the Paul trap over the grid and converts
/// the drive-frequency response into field amplitude. Throws AnalysisError if the particle leaves
/// the optical well.
FieldMap map_rf_field(Simulation& sim, const ProtocolConfig& cfg, const std::vector<double>& xs,
                      const std::vector<double>& ys);

}  // namespace hybridtrap
