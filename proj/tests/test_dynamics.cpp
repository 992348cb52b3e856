#include "doctest.h"

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "hybridtrap/analysis.hpp"
#include "hybridtrap/dynamics.hpp"
#include "hybridtrap/errors.hpp"
#include "hybridtrap/fields.hpp"
#include "hybridtrap/rng.hpp"
#include "hybridtrap/simulation.hpp"
#include "hybridtrap/units.hpp"

using namespace hybridtrap;

namespace {

constexpr double kB = 1.380649e-23;
constexpr double kPi = std::numbers::pi;

double variance(std::span<const double> v) {
    double m = 0.0;
    for (double a : v) m += a;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double a : v) s += (a - m) * (a - m);
    return s / static_cast<double>(v.size());
}

// Slip-corrected Stokes damping, written out independently.
double damping_oracle(double p_pa, double temperature) {
    const double r = 88.5e-9;
    const double m = 4.0 / 3.0 * kPi * r * r * r * 1850.0;
    const double lambda = kB * temperature / (std::sqrt(2.0) * kPi * std::pow(0.372e-9, 2) * p_pa);
    const double kn = lambda / r;
    const double ck = 0.31 * kn / (0.785 + 1.152 * kn + kn * kn);
    return 6.0 * kPi * 18.27e-6 * r / m * 0.619 / (0.619 + kn) * (1.0 + ck);
}

SimConfig free_particle(double pressure_mbar) {
    auto cfg = default_config();
    cfg.paul.enabled = false;
    cfg.optical.enabled = false;
    cfg.environment.gravity = {};
    cfg.feedback.schedule = Schedule::off;
    cfg.environment.pressure = units::mbar(pressure_mbar);
    return cfg;
}

SimConfig optical_only(double pressure_mbar, bool duffing) {
    auto cfg = default_config();
    cfg.paul.enabled = false;
    cfg.optical.enabled = true;
    cfg.optical.duffing_enabled = duffing;
    cfg.optical.scattering_force = 0.0;
    cfg.environment.gravity = {};
    cfg.feedback.schedule = Schedule::off;
    cfg.environment.pressure = units::mbar(pressure_mbar);
    return cfg;
}

double peak_frequency(const TimeTrace& tr, const char* channel, double lo, double hi) {
    const auto psd = welch_psd(tr.channel(channel), tr.sample_rate(), segment_samples(17.5e-3, tr.sample_rate()));
    return band_peak(psd, lo, hi).frequency;
}

}  // namespace

TEST_CASE("gas damping follows the slip-corrected Stokes formula") {
    Environment env;
    const ParticleSpec ps;
    for (double p_mbar : {1e-6, 1e-4, 1e-2, 1.0, 1000.0}) {
        env.pressure = units::mbar(p_mbar);
        CHECK(gas_damping_rate(env, ps) == doctest::Approx(damping_oracle(units::mbar(p_mbar), 300.0)).epsilon(1e-12));
    }
    env.pressure = units::mbar(1e-2);
    // formula evaluation at 1e-2 mbar, 300 K
    CHECK(gas_damping_rate(env, ps) / (2 * kPi) == doctest::Approx(7.34).epsilon(0.01));
    env.pressure = 0.0;
    CHECK(gas_damping_rate(env, ps) == 0.0);
}

TEST_CASE("gas damping is linear in the free-molecular regime and increasing in pressure") {
    Environment env;
    const ParticleSpec ps;
    double last = 0.0;
    for (double p_mbar = 1e-7; p_mbar <= 1e-2 * 1.0001; p_mbar *= 3.0) {
        env.pressure = units::mbar(p_mbar);
        const double g = gas_damping_rate(env, ps);
        env.pressure = units::mbar(2 * p_mbar);
        CHECK(gas_damping_rate(env, ps) / g == doctest::Approx(2.0).epsilon(1e-3));
        CHECK(g > last);
        last = g;
    }
    for (double p_mbar = 1e-2; p_mbar < 1e4; p_mbar *= 4.0) {
        env.pressure = units::mbar(p_mbar);
        const double g = gas_damping_rate(env, ps);
        CHECK(g > last);
        last = g;
    }
}

TEST_CASE("Langevin coefficients") {
    const auto k = langevin_coefficients(100.0, 300.0, 5e-18, 1e-7);
    CHECK(k.decay == doctest::Approx(std::exp(-1e-5)));
    CHECK(k.kick_sigma == doctest::Approx(std::sqrt(kB * 300.0 / 5e-18 * (1 - std::exp(-2e-5)))));
    const auto none = langevin_coefficients(0.0, 300.0, 5e-18, 1e-7);
    CHECK(none.decay == 1.0);
    CHECK(none.kick_sigma == 0.0);
}

TEST_CASE("conservative limit: no energy drift in a harmonic trap") {
    auto cfg = optical_only(0.0, false);
    cfg = validate_config(cfg).config;
    const auto p = derive_particle_properties(cfg.particle);
    const Vec3 w = optical_frequencies(cfg.optical, p.mass);
    PhiloxStream rng(1, 0);
    SimState s{{50e-9, -20e-9, 100e-9}, {0.0, 0.0, 0.0}, 0.0};
    // Velocity Verlet conserves v^2 + w^2 (1 - w^2 h^2 / 4) x^2 exactly for a linear force, so
    // this form exposes drift without the bounded O(h^2) oscillation of the plain energy.
    const double h = cfg.dt;
    auto energy = [&](const SimState& st) {
        double e = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double w2 = w[k] * w[k];
            e += 0.5 * p.mass * (st.velocity[k] * st.velocity[k] + w2 * (1 - w2 * h * h / 4) * st.position[k] * st.position[k]);
        }
        return e;
    };
    const double e0 = energy(s);
    const double periods = 100.0;
    const auto steps = static_cast<long>(std::lround(periods * 2 * kPi / w.z / h));
    double worst = 0.0;
    for (long i = 0; i < steps; ++i) {
        s = step(s, cfg, {}, rng);
        worst = std::max(worst, std::abs(energy(s) - e0) / e0);
    }
    CHECK(worst < 1e-6);
    // the plain energy stays within its bounded oscillation
    const double plain = 0.5 * p.mass * (dot(s.velocity, s.velocity) + w.x * w.x * s.position.x * s.position.x +
                                         w.y * w.y * s.position.y * s.position.y + w.z * w.z * s.position.z * s.position.z);
    CHECK(std::abs(plain - e0) / e0 < std::pow(w.y * h, 2));
}

TEST_CASE("fluctuation-dissipation: free particle velocity variance") {
    auto cfg = free_particle(1.0);
    Simulation sim(cfg, 3);
    const double gamma = sim.damping_rate();
    sim.advance(10.0 / gamma);
    const auto tr = sim.run(400.0 / gamma);
    const double expected = kB * 300.0 / sim.particle().mass;
    for (const char* ch : {"vx", "vy", "vz"}) {
        CHECK(variance(tr.channel(ch)) == doctest::Approx(expected).epsilon(0.05));
    }
}

TEST_CASE("equipartition in the harmonic optical trap") {
    Simulation sim(optical_only(1.0, false), 5);
    sim.thermalize_in_optical_trap(300.0);
    const auto tr = sim.run(2.0);
    const Vec3 w = optical_frequencies(sim.config().optical, sim.particle().mass);
    const char* names[] = {"x", "y", "z"};
    for (int k = 0; k < 3; ++k) {
        const double oracle = kB * 300.0 / (sim.particle().mass * w[k] * w[k]);
        CHECK(variance(tr.channel(names[k])) == doctest::Approx(oracle).epsilon(0.10));
    }
}

TEST_CASE("optical trap spectrum: linear-regime frequency and Duffing softening") {
    // harmonic expansion at 1e-2 mbar and 300 K: peak at the configured 69 kHz
    {
        Simulation sim(optical_only(1e-2, false), 1);
        sim.thermalize_in_optical_trap(300.0);
        const auto tr = sim.run(2.0);
        CHECK(peak_frequency(tr, "qpd_x", 55e3, 80e3) == doctest::Approx(69e3).epsilon(0.01));
    }
    // exact Gaussian: the peak moves down with energy and returns to 69 kHz for a cold particle
    double hot = 0.0;
    double cold = 0.0;
    {
        Simulation sim(optical_only(1e-2, true), 1);
        sim.thermalize_in_optical_trap(300.0);
        hot = peak_frequency(sim.run(1.0), "x", 55e3, 80e3);
    }
    {
        // low pressure keeps the 3 K particle cold for the whole record
        Simulation sim(optical_only(1e-6, true), 1);
        sim.thermalize_in_optical_trap(3.0);
        cold = peak_frequency(sim.run(0.5), "x", 55e3, 80e3);
    }
    CHECK(cold == doctest::Approx(69e3).epsilon(0.01));
    CHECK(hot < cold - 1e3);
    CHECK(hot > 0.85 * cold);
}

TEST_CASE("Paul trap at 300 K: thermal RMS amplitude") {
    auto cfg = default_config();
    cfg.feedback.schedule = Schedule::off;
    cfg.environment.pressure = units::mbar(0.1);  // elevated damping for a short run
    Simulation sim(cfg, 2);
    sim.thermalize_in_paul_trap(300.0);
    const auto tr = sim.run(2.0);
    const Vec3 w = secular_frequencies(sim.config().paul, sim.particle());
    const double m = sim.particle().mass;
    // x = (u - v)/sqrt(2)
    const double oracle = std::sqrt(kB * 300.0 / (2 * m) * (1 / (w.x * w.x) + 1 / (w.y * w.y)));
    const double rms = std::sqrt(variance(tr.channel("x")));
    CHECK(rms == doctest::Approx(oracle).epsilon(0.10));
    CHECK(rms == doctest::Approx(850e-9).epsilon(0.15));
}

TEST_CASE("micromotion-to-secular ratio matches the Floquet solution") {
    auto cfg = default_config();
    cfg.paul.rf_efficiency = 0.73;  // q_u = 0.49
    cfg.feedback.schedule = Schedule::off;
    cfg.environment.pressure = 0.0;
    cfg.environment.gravity = {};
    Simulation sim(cfg, 0);
    const auto mp = mathieu_parameters(sim.config().paul, sim.particle());
    REQUIRE(mp.q_u == doctest::Approx(0.49).epsilon(0.01));
    const auto fl = floquet_stability(mp.a_u, mp.q_u);
    REQUIRE(fl.stable);
    const double big_omega = sim.config().paul.drive_frequency;
    const double ws = fl.beta * big_omega / 2.0;

    // Oracle: Floquet coefficients C_2n of u = sum C_2n cos((beta + 2n) tau) by continued fractions.
    auto fraction = [&](int sign) {
        double v = 0.0;
        for (int n = 40; n >= 1; --n) {
            const double b = fl.beta + 2.0 * sign * n;
            v = mp.q_u / ((mp.a_u - b * b) - mp.q_u * v);
        }
        return v;
    };
    const double oracle = std::abs(fraction(+1)) + std::abs(fraction(-1));

    const double u0 = 1e-6;
    sim.set_state({Vec3{u0, u0, 0.0} * (1 / std::sqrt(2.0)), {}, 0.0});
    const auto tr = sim.run(0.02);
    const auto x = tr.channel("x");
    const auto y = tr.channel("y");
    const Eigen::Index n = static_cast<Eigen::Index>(tr.size());
    Eigen::MatrixXd a(n, 6);
    Eigen::VectorXd b(n);
    const double freqs[3] = {ws, big_omega - ws, big_omega + ws};
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = tr.time_at(static_cast<std::size_t>(i));
        for (int k = 0; k < 3; ++k) {
            a(i, 2 * k) = std::cos(freqs[k] * t);
            a(i, 2 * k + 1) = std::sin(freqs[k] * t);
        }
        b(i) = (x[static_cast<std::size_t>(i)] + y[static_cast<std::size_t>(i)]) / std::sqrt(2.0);
    }
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
    const double secular = std::hypot(c(0), c(1));
    const double ratio = (std::hypot(c(2), c(3)) + std::hypot(c(4), c(5))) / secular;
    CHECK(ratio == doctest::Approx(oracle).epsilon(0.03));
    CHECK(ratio == doctest::Approx(mp.q_u / 2.0).epsilon(0.10));
}

TEST_CASE("deterministic replay and stream independence") {
    auto cfg = default_config();
    const auto a = simulate(cfg, 0.01);
    const auto b = simulate(cfg, 0.01);
    CHECK(a == b);
    cfg.seed = 2;
    const auto c = simulate(cfg, 0.01);
    CHECK_FALSE(a == c);
    Simulation s0(default_config(), 0);
    Simulation s1(default_config(), 1);
    s0.thermalize_in_paul_trap(300.0);
    s1.thermalize_in_paul_trap(300.0);
    CHECK_FALSE(s0.state().position == s1.state().position);
}

TEST_CASE("simulate: trace layout and argument checks") {
    const auto tr = simulate(default_config(), 0.001);
    CHECK(tr.size() == 234);
    CHECK(tr.sample_rate() == 234e3);
    CHECK(tr.channel_count() == trace_channel_names().size());
    for (const char* ch : {"x", "y", "z", "vx", "qpd_x", "qpd_z", "fb_x", "fb_z"}) CHECK(tr.has_channel(ch));
    CHECK_THROWS_AS(simulate(default_config(), 0.0), ValidationError);
    CHECK_THROWS_AS(simulate(default_config(), -1.0), ValidationError);
}

TEST_CASE("non-finite state raises IntegrationError naming the time") {
    Simulation sim(default_config(), 0);
    sim.advance(1e-4);
    SimState s = sim.state();
    s.position.x = std::numeric_limits<double>::quiet_NaN();
    sim.set_state(s);
    CHECK_THROWS_WITH_AS(sim.advance(1e-4), doctest::Contains("t="), IntegrationError);

    PhiloxStream rng(1, 0);
    CHECK_THROWS_AS(step(SimState{}, validate_config(default_config()).config, {std::nan(""), 0, 0}, rng), IntegrationError);
}

TEST_CASE("damped oscillator: energy decays at rate gamma") {
    // harmonic trap, initial energy ~1e4 k_B T so thermal kicks are negligible
    Simulation sim(optical_only(1e-2, false), 0);
    sim.set_state({{10e-6, 0.0, 0.0}, {}, 0.0});
    const double gamma = sim.damping_rate();
    const Vec3 w = optical_frequencies(sim.config().optical, sim.particle().mass);
    auto energy = [&] {
        const auto& s = sim.state();
        return 0.5 * sim.particle().mass * (s.velocity.x * s.velocity.x + w.x * w.x * s.position.x * s.position.x);
    };
    const double e0 = energy();
    REQUIRE(e0 > 1e4 * kB * 300.0);
    sim.advance(2.0 / gamma);
    CHECK(std::log(e0 / energy()) == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("TimeTrace operations") {
    TimeTrace tr({"a", "b"}, {"V", "m"}, 10.0, 1.0);
    tr.append(std::vector<double>{1.0, 2.0});
    tr.append(std::vector<double>{3.0, 4.0});
    CHECK(tr.size() == 2);
    CHECK(tr.time_at(1) == doctest::Approx(1.1));
    CHECK(tr.channel("b")[1] == 4.0);
    CHECK_THROWS_AS((void)tr.channel("c"), std::out_of_range);
    auto copy = tr;
    copy.extend(tr);
    CHECK(copy.size() == 4);
    const auto s = copy.slice(1, 3);
    CHECK(s.size() == 2);
    CHECK(s.channel("a")[0] == 3.0);
    CHECK(s.start_time() == doctest::Approx(1.1));
    TimeTrace other({"x"}, {"V"}, 10.0);
    CHECK_THROWS(copy.extend(other));
}
