#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "hybridtrap/errors.hpp"
#include "hybridtrap/fields.hpp"
#include "hybridtrap/protocol.hpp"
#include "hybridtrap/units.hpp"

using namespace hybridtrap;

namespace {

constexpr double kPi = std::numbers::pi;

TimeTrace synthetic(const std::vector<std::pair<double, double>>& tones, double noise, double duration) {
    const double fs = 234e3;
    TimeTrace tr({"qpd_x"}, {"V"}, fs);
    std::mt19937_64 gen(17);
    std::normal_distribution<double> n01(0.0, 1.0);
    const auto n = static_cast<std::size_t>(duration * fs);
    for (std::size_t i = 0; i < n; ++i) {
        double v = noise * n01(gen);
        for (auto [f, a] : tones) v += a * std::sin(2 * kPi * f * static_cast<double>(i) / fs);
        const double row[1] = {v};
        tr.append(row);
    }
    return tr;
}

std::vector<double> grid(double lo, double hi, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
    return v;
}

}  // namespace

TEST_CASE("success evaluation on constructed spectra") {
    const ProtocolConfig cfg;
    const auto optical = evaluate_success(synthetic({{69e3, 1e-3}}, 1e-4, 0.5), cfg);
    CHECK(optical.success);
    CHECK(optical.spectrum.optical_peak.ratio() >= 10.0);
    CHECK(optical.spectrum.optical_peak.frequency == doctest::Approx(69e3).epsilon(0.005));

    const auto paul = evaluate_success(synthetic({{5.5e3, 1e-3}, {6e3, 1e-3}}, 1e-4, 0.5), cfg);
    CHECK(!paul.success);
    CHECK(paul.spectrum.paul_peak.ratio() > 3.0);

    // both present: the Paul lines veto success
    CHECK(!evaluate_success(synthetic({{69e3, 1e-3}, {5.5e3, 1e-3}}, 1e-4, 0.5), cfg).success);
    // noise alone shows no optical peak
    CHECK(!evaluate_success(synthetic({}, 1e-4, 0.5), cfg).success);
    CHECK_THROWS_AS(evaluate_success(synthetic({{69e3, 1e-3}}, 1e-4, 0.01), cfg), ValidationError);
}

TEST_CASE("precool temperatures") {
    auto cfg = default_config();
    const Vec3 hot = precool_temperatures(cfg, false);
    CHECK(hot.x == 300.0);
    CHECK(hot.z == 300.0);
    double last = 0.0;
    for (double p : {3e-6, 1e-5, 1e-4, 1e-2}) {
        cfg.environment.pressure = units::mbar(p);
        const Vec3 t = precool_temperatures(cfg, true);
        for (int k = 0; k < 3; ++k) {
            CHECK(t[k] > 0.0);
            CHECK(t[k] < 300.0);
        }
        CHECK(t.x > last);
        last = t.x;
    }
    cfg.environment.pressure = units::mbar(3e-6);
    const Vec3 cold = precool_temperatures(cfg, true);
    CHECK(cold.x == doctest::Approx(1.0).epsilon(0.5));
}

TEST_CASE("successful transfer: step log, spectral signature and occupancy") {
    const ExperimentConfig ec;
    Simulation sim(ec.sim, 0);
    prepare_precooled(sim, true);
    const auto out = transfer_attempt(sim, ec.protocol, true, true);
    REQUIRE(!out.diverged);
    CHECK(out.success);
    CHECK(out.spectral_success);
    CHECK(out.occupancy == Occupancy::optical);
    CHECK(10 * std::log10(out.pre.paul_power / out.post.paul_power) >= 20.0);
    CHECK(out.post.optical_peak.ratio() >= 10.0);
    CHECK(out.post.paul_peak.ratio() < 3.0);

    REQUIRE(out.steps.size() == 5);
    CHECK(out.steps[0].time == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(out.steps[1].time == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(out.steps[2].time == doctest::Approx(ec.protocol.feedback_delay).epsilon(1e-4));
    CHECK(out.steps[3].time == doctest::Approx(ec.protocol.feedback_delay + ec.protocol.evaluation_delay).epsilon(1e-4));
    CHECK(out.steps[4].time ==
          doctest::Approx(ec.protocol.feedback_delay + ec.protocol.evaluation_delay + ec.protocol.evaluation_window).epsilon(1e-4));
    CHECK(out.trace.start_time() < -0.9 * ec.protocol.pre_duration);
    CHECK(out.trace.size() > 0);
    CHECK(sim.config().feedback.schedule == Schedule::optical);
}

TEST_CASE("failed transfer: Paul lines stay, particle is not lost") {
    ExperimentConfig ec;
    ec.sim.paul.trap_offset = {800e-9, 0, 0};
    int successes = 0;
    for (std::uint64_t trial = 0; trial < 4; ++trial) {
        Simulation sim(ec.sim, trial);
        prepare_precooled(sim, true);
        const auto out = transfer_attempt(sim, ec.protocol, true, false);
        successes += out.success;
        CHECK(!out.diverged);
        CHECK(out.occupancy == Occupancy::paul);
        CHECK(!out.spectral_success);
        CHECK(out.trace.size() == 0);
    }
    CHECK(successes == 0);
}

TEST_CASE("conservative forces and no damping: a 300 K particle does not settle") {
    ExperimentConfig ec;
    ec.sim.environment.pressure = 0.0;
    ec.sim.optical.scattering_force = 0.0;
    int settled = 0;
    for (std::uint64_t trial = 0; trial < 6; ++trial) {
        Simulation sim(ec.sim, trial);
        prepare_precooled(sim, false);
        const auto out = transfer_attempt(sim, ec.protocol, false, false);
        settled += out.occupancy == Occupancy::optical;
    }
    CHECK(settled == 0);
}

TEST_CASE("transfer rejects invalid timing and flags divergence separately") {
    ExperimentConfig ec;
    Simulation sim(ec.sim, 0);
    prepare_precooled(sim, true);
    auto bad = ec.protocol;
    bad.evaluation_window = 0.0;
    CHECK_THROWS_AS(transfer_attempt(sim, bad), ValidationError);

    // RF far beyond the stability region: the motion grows without bound
    Simulation wild(ec.sim, 0);
    prepare_precooled(wild, true);
    wild.set_rf_amplitude(10 * ec.sim.paul.rf_amplitude);
    const auto out = transfer_attempt(wild, ec.protocol);
    CHECK(out.diverged);
    CHECK(!out.success);
    CHECK(out.occupancy == Occupancy::lost);
    CHECK(!out.error.empty());
}

TEST_CASE("stray-field compensation balances the injected field") {
    ExperimentConfig ec;
    ec.sim.environment.gravity = {};
    SUBCASE("no stray field") {
        Simulation sim(ec.sim, 0);
        prepare_precooled(sim, true);
        sim.advance(0.1);
        const Vec3 v = compensate_stray_fields(sim, ec.protocol);
        for (int k = 0; k < 3; ++k) CHECK(std::abs(v[k]) < 2e-3);
    }
    SUBCASE("uniform stray field") {
        const Vec3 stray{20.0, -15.0, 8.0};
        ec.sim.paul.stray_field = stray;
        Simulation sim(ec.sim, 1);
        prepare_precooled(sim, true);
        sim.advance(0.1);
        const double before = micromotion_amplitude(sim, ec.protocol);
        const Vec3 v = compensate_stray_fields(sim, ec.protocol);
        const double after = micromotion_amplitude(sim, ec.protocol);
        const Vec3& g = ec.sim.paul.shim_gain;
        for (int k = 0; k < 3; ++k) {
            CAPTURE(k);
            CHECK(std::abs(stray[k] + g[k] * v[k]) < 0.05 * std::abs(stray[k]));
        }
        CHECK(after < 0.05 * before);
        CHECK(sim.config().paul.shim_voltage.x == v.x);
    }
    SUBCASE("gravity") {
        ec.sim.environment.gravity = {0.0, -units::standard_gravity, 0.0};
        Simulation sim(ec.sim, 2);
        prepare_precooled(sim, true);
        sim.advance(0.1);
        const Vec3 v = compensate_stray_fields(sim, ec.protocol);
        const double expected = sim.particle().mass * units::standard_gravity / sim.particle().charge / ec.sim.paul.shim_gain.y;
        CHECK(v.y == doctest::Approx(expected).epsilon(0.05));
    }
    SUBCASE("one probe step cannot converge") {
        ec.sim.paul.stray_field = {20.0, 0, 0};
        auto p = ec.protocol;
        p.compensation_iterations = 1;
        p.compensation_step = 1e-4;
        Simulation sim(ec.sim, 0);
        prepare_precooled(sim, true);
        CHECK_THROWS_AS(compensate_stray_fields(sim, p), AnalysisError);
    }
}

TEST_CASE("trap alignment recovers a known offset") {
    ExperimentConfig ec;
    SUBCASE("300 nm along x") {
        ec.sim.paul.trap_offset = {300e-9, 0, 0};
        Simulation sim(ec.sim, 0);
        prepare_precooled(sim, true);
        sim.advance(0.1);
        compensate_stray_fields(sim, ec.protocol);
        const Vec3 est = align_traps(sim, ec.protocol);
        CHECK(est.x == doctest::Approx(300e-9).epsilon(50.0 / 300.0));
        CHECK(std::abs(sim.trap_offset().x) < 50e-9);
    }
    SUBCASE("aligned traps") {
        Simulation sim(ec.sim, 1);
        prepare_precooled(sim, true);
        sim.advance(0.1);
        compensate_stray_fields(sim, ec.protocol);
        const Vec3 est = align_traps(sim, ec.protocol);
        CHECK(norm(est) < 25e-9);
    }
    SUBCASE("no detector signal") {
        ec.sim.detector.gain = {0, 0, 0};
        Simulation sim(ec.sim, 0);
        prepare_precooled(sim, true);
        CHECK_THROWS_AS(align_traps(sim, ec.protocol), AnalysisError);
    }
}

TEST_CASE("recovery time scales inversely with pressure") {
    ExperimentConfig ec;
    ec.protocol.recovery_chunk = 0.01;
    ec.sim.environment.pressure = units::mbar(1e-4);
    double slow = 0.0;
    double fast = 0.0;
    const int trials = 16;
    for (int trial = 0; trial < trials; ++trial) {
        Simulation sim(ec.sim, static_cast<std::uint64_t>(trial));
        prepare_precooled(sim, false);
        const auto out = transfer_attempt(sim, ec.protocol, false, false);
        REQUIRE(out.occupancy == Occupancy::paul);
        Simulation higher = sim;
        higher.set_pressure(units::mbar(1e-3));
        slow += recover_after_failure(sim, ec.protocol);
        fast += recover_after_failure(higher, ec.protocol);
        CHECK(sim.config().feedback.schedule == Schedule::paul);
        CHECK(!sim.config().optical.enabled);
    }
    CHECK(slow / fast == doctest::Approx(10.0).epsilon(0.2));

    Simulation sim(ec.sim, 0);
    prepare_precooled(sim, false);
    transfer_attempt(sim, ec.protocol, false, false);
    auto p = ec.protocol;
    p.recovery_timeout = 1e-3;
    CHECK_THROWS_AS(recover_after_failure(sim, p), AnalysisError);
    ec.sim.environment.pressure = 0.0;
    Simulation vacuum(ec.sim, 0);
    CHECK_THROWS_AS(recover_after_failure(vacuum, ec.protocol), ValidationError);
}

TEST_CASE("detection sensitivity map") {
    const ExperimentConfig ec;
    Simulation sim(ec.sim, 0);
    prepare_precooled(sim, true);
    sim.advance(0.1);
    const auto xs = grid(-3e-6, 3e-6, 25);
    const std::vector<double> ys{-1e-6, 0.0, 1e-6};
    const auto map = map_detection_sensitivity(sim, ec.protocol, xs, ys);
    REQUIRE(map.data.size() == xs.size() * ys.size());

    std::size_t best = 0;
    for (std::size_t i = 1; i < map.data.size(); ++i)
        if (map.data[i] > map.data[best]) best = i;
    CHECK(best % xs.size() == 12);
    CHECK(best / xs.size() == 1);

    const double l = ec.sim.detector.inversion_length;
    for (int side : {1, -1}) {
        int flips = 0;
        double crossing = 0.0;
        for (std::size_t k = 0; k + 1 <= 12; ++k) {
            const std::size_t a = 12 + side * static_cast<int>(k);
            const std::size_t b = 12 + side * static_cast<int>(k + 1);
            const double va = map.at(a, 1), vb = map.at(b, 1);
            if ((va > 0) != (vb > 0)) {
                ++flips;
                crossing = std::abs(xs[a] + (xs[b] - xs[a]) * va / (va - vb));
            }
        }
        CAPTURE(side);
        CHECK(flips == 1);
        CHECK(crossing > 0.7 * l);
        CHECK(crossing < 1.1 * l);
    }
    const double peak = map.data[best];
    for (std::size_t ix = 0; ix < xs.size(); ++ix) CHECK(std::abs(map.at(ix, 0) - map.at(ix, 2)) < 0.1 * peak);
    CHECK(norm(sim.trap_offset()) < 1e-12);

    CHECK_THROWS_AS(map_detection_sensitivity(sim, ec.protocol, {0.0, 200e-6}, {0.0}), ValidationError);
}

TEST_CASE("RF field map against the analytic quadrupole") {
    const ExperimentConfig ec;
    Simulation sim(ec.sim, 0);
    prepare_precooled(sim, true);
    sim.advance(0.1);
    const auto xs = grid(-100e-6, 100e-6, 5);
    const auto ys = grid(-100e-6, 100e-6, 5);
    const auto map = map_rf_field(sim, ec.protocol, xs, ys);
    CHECK(map.residual < 0.05);
    CHECK(map.calibration_x.factor == doctest::Approx(1.0 / ec.sim.detector.gain.x).epsilon(0.05));
    CHECK(map.calibration_y.factor == doctest::Approx(1.0 / ec.sim.detector.gain.y).epsilon(0.05));

    double emax = 0.0;
    for (const auto& e : map.measured.data) emax = std::max(emax, norm(e));
    CHECK(norm(map.measured.at(2, 2)) < 0.01 * emax);
    // 90 degree rotation (x, y) -> (-y, x) negates the quadrupole: E(R r) = -R E(r)
    for (std::size_t iy = 0; iy < 5; ++iy) {
        for (std::size_t ix = 0; ix < 5; ++ix) {
            const Vec3& e = map.measured.at(ix, iy);
            const Vec3& r = map.measured.at(4 - iy, ix);
            CHECK(std::abs(r.x - e.y) < 0.05 * emax);
            CHECK(std::abs(r.y + e.x) < 0.05 * emax);
        }
    }
    // settings restored
    CHECK(sim.config().paul.rf_amplitude == ec.sim.paul.rf_amplitude);
    CHECK(sim.config().paul.endcap_voltage == ec.sim.paul.endcap_voltage);
    CHECK(!sim.config().optical.enabled);
}
