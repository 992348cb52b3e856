#include "hybridtrap/control.hpp"

#include <algorithm>
#include <cmath>

#include "hybridtrap/errors.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

std::complex<double> BiquadState::response(double f, double sample_rate) const {
    const std::complex<double> zinv = std::polar(1.0, -units::two_pi * f / sample_rate);
    return (b0 + b1 * zinv + b2 * zinv * zinv) / (1.0 + a1 * zinv + a2 * zinv * zinv);
}

bool BiquadState::stable() const {
    // Jury conditions for z^2 + a1 z + a2.
    return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

BiquadState design_bandpass(double f0, double quality_factor, double sample_rate) {
    if (!(sample_rate > 0.0) || !(f0 > 0.0) || f0 >= 0.5 * sample_rate) {
        throw ValidationError("bandpass centre frequency must lie in (0, sample_rate/2)");
    }
    if (!(quality_factor > 0.0)) throw ValidationError("bandpass quality factor must be > 0");
    const double w0 = units::two_pi * f0 / sample_rate;
    const double alpha = std::sin(w0) / (2.0 * quality_factor);
    const double a0 = 1.0 + alpha;
    BiquadState bq;
    bq.b0 = alpha / a0;
    bq.b1 = 0.0;
    bq.b2 = -alpha / a0;
    bq.a1 = -2.0 * std::cos(w0) / a0;
    bq.a2 = (1.0 - alpha) / a0;
    return bq;
}

FeedbackConfig schedule_switch(const FeedbackConfig& cfg, Schedule next) {
    FeedbackConfig out = cfg;
    out.schedule = next;
    return out;
}

FeedbackConfig schedule_switch(const FeedbackConfig& cfg, const std::string& next) {
    return schedule_switch(cfg, schedule_from_string(next));
}

Controller::Controller(const FeedbackConfig& cfg, double control_rate, const Vec3& actuation)
    : cfg_(cfg), rate_(control_rate), actuation_(actuation) {
    rebuild();
}

void Controller::rebuild() {
    if (cfg_.schedule != Schedule::off) {
        const Vec3& f = cfg_.schedule == Schedule::paul ? cfg_.paul_frequencies : cfg_.optical_frequencies;
        for (int i = 0; i < 3; ++i) filters_[static_cast<std::size_t>(i)] = design_bandpass(f[i], cfg_.quality_factor, rate_);
    }
    delay_line_.assign(static_cast<std::size_t>(std::max(cfg_.loop_delay, 0)) + 1, Vec3{});
    reset();
}

void Controller::reset() noexcept {
    for (auto& f : filters_) f.reset();
    last_filtered_ = {};
    std::fill(delay_line_.begin(), delay_line_.end(), Vec3{});
    delay_head_ = 0;
    voltages_ = {};
}

void Controller::switch_schedule(Schedule next) {
    cfg_.schedule = next;
    rebuild();
}

Vec3 Controller::gains() const noexcept {
    switch (cfg_.schedule) {
        case Schedule::paul: return cfg_.paul_gain;
        case Schedule::optical: return cfg_.optical_gain;
        case Schedule::off: break;
    }
    return {};
}

Vec3 Controller::step(const Vec3& position_estimate) noexcept {
    if (cfg_.schedule == Schedule::off) return {};
    Vec3 velocity;
    for (int i = 0; i < 3; ++i) {
        const double y = filters_[static_cast<std::size_t>(i)].process(position_estimate[i]);
        velocity[i] = (y - last_filtered_[i]) * rate_;
        last_filtered_[i] = y;
    }
    delay_line_[delay_head_] = velocity;
    const std::size_t n = delay_line_.size();
    const Vec3 delayed = delay_line_[(delay_head_ + 1) % n];
    delay_head_ = (delay_head_ + 1) % n;

    const Vec3 g = gains();
    Vec3 force;
    for (int i = 0; i < 3; ++i) {
        const double a = actuation_[i];
        if (a == 0.0) {
            voltages_[i] = 0.0;
            continue;
        }
        const double v = std::clamp(-g[i] * delayed[i] / a, -cfg_.voltage_clamp, cfg_.voltage_clamp);
        voltages_[i] = v;
        force[i] = a * v;
    }
    return force;
}

std::complex<double> velocity_estimator_response(const BiquadState& bandpass, double f, double control_rate,
                                                 int loop_delay) {
    const std::complex<double> zinv = std::polar(1.0, -units::two_pi * f / control_rate);
    return bandpass.response(f, control_rate) * (1.0 - zinv) * control_rate * std::pow(zinv, loop_delay);
}

double feedback_damping_rate(const FeedbackConfig& cfg, Schedule schedule, const Vec3& mode_direction, double omega,
                             double mass, double control_rate) {
    if (schedule == Schedule::off) return 0.0;
    const Vec3& centres = schedule == Schedule::paul ? cfg.paul_frequencies : cfg.optical_frequencies;
    const Vec3& gains = schedule == Schedule::paul ? cfg.paul_gain : cfg.optical_gain;
    const double f = omega / units::two_pi;
    double rate = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double e2 = mode_direction[i] * mode_direction[i];
        if (e2 == 0.0 || gains[i] == 0.0) continue;
        const auto bp = design_bandpass(centres[i], cfg.quality_factor, control_rate);
        const auto h = velocity_estimator_response(bp, f, control_rate, cfg.loop_delay);
        rate += gains[i] * e2 * (h / std::complex<double>(0.0, omega)).real();
    }
    return rate / mass;
}

}  // namespace hybridtrap
