#include "hybridtrap/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include <fftw3.h>

#include "hybridtrap/errors.hpp"
#include "hybridtrap/units.hpp"

namespace hybridtrap {

namespace {

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<double> make_window(Window w, std::size_t n) {
    std::vector<double> out(n, 1.0);
    if (w == Window::hann) {
        // Periodic Hann, the usual choice for spectral averaging.
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = 0.5 - 0.5 * std::cos(units::two_pi * static_cast<double>(i) / static_cast<double>(n));
        }
    }
    return out;
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

double interpolate(const Psd& psd, double f) {
    const auto& fr = psd.frequencies;
    const auto it = std::upper_bound(fr.begin(), fr.end(), f);
    if (it == fr.begin()) return psd.density.front();
    if (it == fr.end()) return psd.density.back();
    const auto i = static_cast<std::size_t>(it - fr.begin());
    const double a = (f - fr[i - 1]) / (fr[i] - fr[i - 1]);
    return psd.density[i - 1] + a * (psd.density[i] - psd.density[i - 1]);
}

}  // namespace

std::string to_string(Window w) { return w == Window::hann ? "hann" : "rectangular"; }

Window window_from_string(const std::string& name) {
    if (name == "hann") return Window::hann;
    if (name == "rectangular" || name == "boxcar") return Window::rectangular;
    throw ValidationError("unknown window '" + name + "' (expected hann or rectangular)");
}

std::size_t segment_samples(double duration, double sample_rate) {
    return static_cast<std::size_t>(std::llround(duration * sample_rate));
}

Psd welch_psd(std::span<const double> signal, double sample_rate, std::size_t segment_length, double overlap,
              Window window) {
    if (segment_length < 2) throw ValidationError("welch_psd: segment must hold at least 2 samples");
    if (segment_length > signal.size()) {
        throw ValidationError("welch_psd: segment of " + std::to_string(segment_length) + " samples exceeds trace of " +
                              std::to_string(signal.size()));
    }
    if (!(overlap >= 0.0 && overlap < 1.0)) throw ValidationError("welch_psd: overlap must be in [0, 1)");
    if (!(sample_rate > 0.0)) throw ValidationError("welch_psd: sample rate must be > 0");

    const std::size_t n = segment_length;
    const std::size_t bins = n / 2 + 1;
    const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - overlap))));
    const std::vector<double> w = make_window(window, n);
    const double w2 = std::inner_product(w.begin(), w.end(), w.begin(), 0.0);

    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(bins);
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    }

    Psd psd;
    psd.segment_length = n;
    psd.window = window;
    psd.frequencies.resize(bins);
    psd.density.assign(bins, 0.0);
    for (std::size_t k = 0; k < bins; ++k) psd.frequencies[k] = static_cast<double>(k) * sample_rate / static_cast<double>(n);

    std::size_t segments = 0;
    for (std::size_t start = 0; start + n <= signal.size(); start += hop) {
        const auto seg = signal.subspan(start, n);
        const double mean = std::accumulate(seg.begin(), seg.end(), 0.0) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) in[i] = (seg[i] - mean) * w[i];
        fftw_execute(plan);
        for (std::size_t k = 0; k < bins; ++k) psd.density[k] += out[k][0] * out[k][0] + out[k][1] * out[k][1];
        ++segments;
    }
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);

    const double scale = 1.0 / (sample_rate * w2 * static_cast<double>(segments));
    for (std::size_t k = 0; k < bins; ++k) {
        const bool edge = k == 0 || (n % 2 == 0 && k == bins - 1);
        psd.density[k] *= (edge ? 1.0 : 2.0) * scale;
    }
    return psd;
}

double band_power(const Psd& psd, double f_lo, double f_hi) {
    if (!(f_hi > f_lo)) throw ValidationError("band_power: band upper edge must exceed lower edge");
    if (psd.frequencies.size() < 2) throw ValidationError("band_power: empty PSD");
    const double eps = 1e-9 * psd.resolution();
    if (f_lo < psd.frequencies.front() - eps || f_hi > psd.frequencies.back() + eps) {
        throw ValidationError("band_power: band outside PSD range");
    }
    const auto& fr = psd.frequencies;
    double total = 0.0;
    double f_prev = f_lo;
    double s_prev = interpolate(psd, f_lo);
    for (std::size_t k = 0; k < fr.size(); ++k) {
        if (fr[k] <= f_lo) continue;
        if (fr[k] >= f_hi) break;
        total += 0.5 * (s_prev + psd.density[k]) * (fr[k] - f_prev);
        f_prev = fr[k];
        s_prev = psd.density[k];
    }
    total += 0.5 * (s_prev + interpolate(psd, f_hi)) * (f_hi - f_prev);
    return total;
}

BandPeak band_peak(const Psd& psd, double f_lo, double f_hi) {
    if (!(f_hi > f_lo)) throw ValidationError("band_peak: band upper edge must exceed lower edge");
    std::vector<double> in_band;
    BandPeak out;
    for (std::size_t k = 0; k < psd.frequencies.size(); ++k) {
        const double f = psd.frequencies[k];
        if (f < f_lo || f > f_hi) continue;
        in_band.push_back(psd.density[k]);
        if (psd.density[k] > out.peak) {
            out.peak = psd.density[k];
            out.frequency = f;
        }
    }
    if (in_band.empty()) throw ValidationError("band_peak: no PSD bins inside band");
    out.median = median_of(std::move(in_band));
    return out;
}

double oscillator_psd(double f, double f0, double linewidth, double area, double background) {
    const double d = f0 * f0 - f * f;
    return area * (2.0 / units::pi) * f0 * f0 * linewidth / (d * d + linewidth * linewidth * f * f) + background;
}

LorentzianFit lorentzian_fit(const Psd& psd, double f_guess, double span) {
    if (!(f_guess > 0.0) || !(span > 0.0)) throw ValidationError("lorentzian_fit: guess and span must be > 0");
    std::vector<double> f;
    std::vector<double> s;
    for (std::size_t k = 0; k < psd.frequencies.size(); ++k) {
        const double fk = psd.frequencies[k];
        if (fk >= f_guess * (1.0 - span) && fk <= f_guess * (1.0 + span) && fk > 0.0) {
            f.push_back(fk);
            s.push_back(psd.density[k]);
        }
    }
    const std::size_t n = f.size();
    if (n < 8) throw AnalysisError("lorentzian_fit: fewer than 8 PSD bins around the guess");

    // Work in units of f_guess and of the peak density so all parameters are O(1).
    const std::size_t imax = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    const double s_scale = s[imax];
    if (!(s_scale > 0.0)) throw AnalysisError("lorentzian_fit: no peak near guess");
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = f[i] / f_guess;
        y[i] = s[i] / s_scale;
    }

    std::vector<double> sorted = y;
    std::sort(sorted.begin(), sorted.end());
    const double b0 = sorted[n / 10];
    std::size_t lo = imax;
    std::size_t hi = imax;
    const double half = 0.5 * (1.0 + b0);
    while (lo > 0 && y[lo] > half) --lo;
    while (hi + 1 < n && y[hi] > half) ++hi;
    const double dx = x.size() > 1 ? x[1] - x[0] : 1.0;
    double g0 = std::max(x[hi] - x[lo], dx);
    double a0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) a0 += std::max(y[i] - b0, 0.0) * dx;
    a0 = std::max(a0, 0.5 * units::pi * g0 * (1.0 - b0) * 0.5);

    Eigen::Vector4d p(x[imax], g0, a0, b0);
    auto model = [&](const Eigen::Vector4d& q, double xi) { return oscillator_psd(xi, q(0), q(1), q(2), q(3)); };
    auto cost = [&](const Eigen::Vector4d& q) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - model(q, x[i]);
            c += r * r;
        }
        return c;
    };
    auto jacobian = [&](const Eigen::Vector4d& q) {
        Eigen::MatrixXd jac(n, 4);
        for (std::size_t i = 0; i < n; ++i) {
            const double xi = x[i];
            const double f0 = q(0), g = q(1), a = q(2);
            const double d = f0 * f0 - xi * xi;
            const double den = d * d + g * g * xi * xi;
            const double c = (2.0 / units::pi);
            const double line = c * f0 * f0 * g / den;
            // d/df0 of f0^2 g / den = (2 f0 g den - f0^2 g * 4 f0 d) / den^2
            jac(static_cast<Eigen::Index>(i), 0) = a * c * (2.0 * f0 * g * den - f0 * f0 * g * 4.0 * f0 * d) / (den * den);
            jac(static_cast<Eigen::Index>(i), 1) = a * c * f0 * f0 * (den - g * 2.0 * g * xi * xi) / (den * den);
            jac(static_cast<Eigen::Index>(i), 2) = line;
            jac(static_cast<Eigen::Index>(i), 3) = 1.0;
        }
        return jac;
    };

    double lambda = 1e-3;
    double c = cost(p);
    int it = 0;
    bool converged = false;
    for (; it < 200; ++it) {
        const Eigen::MatrixXd jac = jacobian(p);
        Eigen::VectorXd r(n);
        for (std::size_t i = 0; i < n; ++i) r(static_cast<Eigen::Index>(i)) = y[i] - model(p, x[i]);
        const Eigen::Matrix4d jtj = jac.transpose() * jac;
        const Eigen::Vector4d jtr = jac.transpose() * r;
        bool improved = false;
        while (lambda < 1e12) {
            Eigen::Matrix4d a = jtj;
            for (int k = 0; k < 4; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-30);
            const Eigen::Vector4d step = a.ldlt().solve(jtr);
            Eigen::Vector4d trial = p + step;
            trial(1) = std::abs(trial(1));
            trial(2) = std::abs(trial(2));
            const double ct = cost(trial);
            if (std::isfinite(ct) && ct < c) {
                const double rel = (c - ct) / std::max(c, 1e-300);
                p = trial;
                c = ct;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (rel < 1e-12 || step.cwiseAbs().maxCoeff() < 1e-12) converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            converged = true;
            break;
        }
        if (converged) break;
    }
    if (!converged || !(p(0) > 0.0) || !std::isfinite(c)) {
        throw AnalysisError("lorentzian_fit: no convergence after " + std::to_string(it) + " iterations");
    }

    const Eigen::MatrixXd jac = jacobian(p);
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const double dof = static_cast<double>(n > 4 ? n - 4 : 1);
    Eigen::Matrix4d cov = jtj.inverse() * (c / dof);
    const Eigen::Vector4d unit(f_guess, f_guess, s_scale * f_guess, s_scale);
    cov = unit.asDiagonal() * cov * unit.asDiagonal();

    LorentzianFit out;
    out.f0 = p(0) * f_guess;
    out.linewidth = p(1) * f_guess;
    out.area = p(2) * s_scale * f_guess;
    out.background = p(3) * s_scale;
    out.covariance = cov;
    out.iterations = it;
    return out;
}

CalibrationResult calibrate(std::span<const double> signal, double sample_rate, double temperature, double mass,
                            double f_guess, std::size_t segment_length) {
    if (!(temperature > 0.0) || !(mass > 0.0)) throw ValidationError("calibrate: temperature and mass must be > 0");
    const Psd psd = welch_psd(signal, sample_rate, segment_length);
    const LorentzianFit fit = lorentzian_fit(psd, f_guess);
    const double height = oscillator_psd(fit.f0, fit.f0, fit.linewidth, fit.area, 0.0);
    if (!(height >= 10.0 * std::abs(fit.background)) || !(fit.area > 0.0)) {
        throw AnalysisError("calibrate: thermal peak SNR below 10");
    }
    const double omega = units::two_pi * fit.f0;
    const double variance = units::boltzmann * temperature / (mass * omega * omega);
    CalibrationResult out;
    out.factor = std::sqrt(variance / fit.area);
    out.f0 = fit.f0;
    out.linewidth = fit.linewidth;
    out.covariance = fit.covariance;
    return out;
}

}  // namespace hybridtrap
