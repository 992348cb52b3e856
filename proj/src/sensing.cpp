#include "hybridtrap/sensing.hpp"

#include <boost/random/normal_distribution.hpp>

#include "hybridtrap/errors.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

Vec3 detector_response(const Vec3& position, const DetectorConfig& det) {
    const Vec3 d = position - det.focus;
    const double w2 = det.measurement_waist * det.measurement_waist;
    const double envelope = std::exp(-2.0 * (d.x * d.x + d.y * d.y) / w2);
    const double k = units::pi / (2.0 * det.inversion_length);
    const double scale = envelope / k;
    return {det.gain.x * scale * std::sin(k * d.x), det.gain.y * scale * std::sin(k * d.y),
            det.gain.z * scale * std::sin(k * d.z)};
}

double local_x_sensitivity(const Vec3& position, const DetectorConfig& det) {
    const Vec3 d = position - det.focus;
    const double w2 = det.measurement_waist * det.measurement_waist;
    const double envelope = std::exp(-2.0 * (d.x * d.x + d.y * d.y) / w2);
    const double k = units::pi / (2.0 * det.inversion_length);
    return det.gain.x * envelope * (std::cos(k * d.x) - std::sin(k * d.x) / k * 4.0 * d.x / w2);
}

Vec3 detector_sample(const Vec3& position, const DetectorConfig& det, double rate, PhiloxStream& rng) {
    Vec3 s = detector_response(position, det);
    const double sigma = detector_noise_sigma(det, rate);
    if (sigma > 0.0) {
        boost::random::normal_distribution<double> normal(0.0, sigma);
        s += Vec3{normal(rng), normal(rng), normal(rng)};
    }
    return s;
}

DemodResult demodulate(std::span<const double> signal, double sample_rate, double f_ref, double bandwidth,
                       double start_time) {
    if (!(sample_rate > 0.0) || !(f_ref > 0.0) || f_ref >= 0.5 * sample_rate) {
        throw ValidationError("demodulate: reference frequency must lie in (0, Nyquist)");
    }
    if (!(bandwidth > 0.0) || bandwidth >= f_ref) throw ValidationError("demodulate: bandwidth must lie in (0, f_ref)");
    const double tau = 1.0 / (units::two_pi * bandwidth);
    const auto settle = static_cast<std::size_t>(std::ceil(5.0 * tau * sample_rate));
    if (signal.size() < static_cast<std::size_t>(std::ceil(5.0 / bandwidth * sample_rate)) || signal.size() <= settle) {
        throw ValidationError("demodulate: trace shorter than 5/bandwidth");
    }
    const double alpha = -std::expm1(-1.0 / (tau * sample_rate));
    const double w = units::two_pi * f_ref / sample_rate;
    const double phase0 = units::two_pi * f_ref * start_time;
    double i1 = 0.0, i2 = 0.0, q1 = 0.0, q2 = 0.0;
    double sum_i = 0.0, sum_q = 0.0;
    for (std::size_t n = 0; n < signal.size(); ++n) {
        const double arg = phase0 + w * static_cast<double>(n);
        const double mi = signal[n] * std::cos(arg);
        const double mq = -signal[n] * std::sin(arg);
        i1 += alpha * (mi - i1);
        i2 += alpha * (i1 - i2);
        q1 += alpha * (mq - q1);
        q2 += alpha * (q1 - q2);
        if (n >= settle) {
            sum_i += i2;
            sum_q += q2;
        }
    }
    const double count = static_cast<double>(signal.size() - settle);
    const double i = 2.0 * sum_i / count;
    const double q = 2.0 * sum_q / count;
    return {std::hypot(i, q), std::atan2(q, i), f_ref};
}

}  // namespace hybridtrap
