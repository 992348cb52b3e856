#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include "hybridtrap/config.hpp"
#include "hybridtrap/vec3.hpp"

namespace hybridtrap {

/// Direct-form-II transposed second-order section.
struct BiquadState {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
    double z1 = 0.0, z2 = 0.0;

    double process(double x) noexcept {
        const double y = b0 * x + z1;
        z1 = b1 * x - a1 * y + z2;
        z2 = b2 * x - a2 * y;
        return y;
    }
    void reset() noexcept { z1 = z2 = 0.0; }

    /// H(e^{i 2 pi f / fs}).
    [[nodiscard]] std::complex<double> response(double f, double sample_rate) const;
    /// Both poles strictly inside the unit circle.
    [[nodiscard]] bool stable() const;
};

/// Bilinear-transform bandpass with unity gain at f0 (constant peak gain form).
/// Throws ValidationError unless 0 < f0 < sample_rate / 2 and Q > 0.
BiquadState design_bandpass(double f0, double quality_factor, double sample_rate);

/// Returns cfg with the schedule changed. Throws ValidationError for unknown names.
FeedbackConfig schedule_switch(const FeedbackConfig& cfg, Schedule next);
FeedbackConfig schedule_switch(const FeedbackConfig& cfg, const std::string& next);

/// Cold-damping controller: per-axis bandpass, discrete derivative, loop delay, force -g v.
/// Output is expressed as shim voltages (clamped) times the actuation gain in N/V.
class Controller {
public:
    Controller() = default;
    /// `actuation` is force per shim volt along each axis (charge x shim field gain).
    Controller(const FeedbackConfig& cfg, double control_rate, const Vec3& actuation);

    /// Feeds one position estimate (m) and returns the feedback force (N) to hold until the next call.
    Vec3 step(const Vec3& position_estimate) noexcept;

    /// Rebuilds the filter bank for `next` and clears all filter and delay state.
    void switch_schedule(Schedule next);
    void reset() noexcept;

    [[nodiscard]] Schedule schedule() const noexcept { return cfg_.schedule; }
    [[nodiscard]] bool active() const noexcept { return cfg_.schedule != Schedule::off; }
    [[nodiscard]] const Vec3& voltages() const noexcept { return voltages_; }
    [[nodiscard]] const FeedbackConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const std::array<BiquadState, 3>& filters() const noexcept { return filters_; }
    [[nodiscard]] Vec3 gains() const noexcept;

private:
    void rebuild();

    FeedbackConfig cfg_;
    double rate_ = 1.0;
    Vec3 actuation_;
    std::array<BiquadState, 3> filters_{};
    Vec3 last_filtered_;
    std::vector<Vec3> delay_line_;
    std::size_t delay_head_ = 0;
    Vec3 voltages_;
};

/// Velocity-estimate transfer function of one axis (bandpass x derivative x delay), v_hat / x.
std::complex<double> velocity_estimator_response(const BiquadState& bandpass, double f, double control_rate, int loop_delay);

/// Feedback damping rate (1/s) added to a mode with direction `mode_direction` (unit vector)
/// at angular frequency `omega` under schedule `schedule`, for a linear detector.
double feedback_damping_rate(const FeedbackConfig& cfg, Schedule schedule, const Vec3& mode_direction, double omega,
                             double mass, double control_rate);

}  // namespace hybridtrap
