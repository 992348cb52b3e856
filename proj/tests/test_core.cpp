#include "doctest.h"

#include <cmath>
#include <numbers>

#include "hybridtrap/config.hpp"
#include "hybridtrap/config_io.hpp"
#include "hybridtrap/errors.hpp"
#include "hybridtrap/fields.hpp"
#include "hybridtrap/units.hpp"

using namespace hybridtrap;

TEST_CASE("particle mass and charge from radius, density and charge-to-mass") {
    ParticleSpec spec;  // 177 nm diameter silica
    const auto p = derive_particle_properties(spec);
    const double r = 88.5e-9;
    const double volume = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    CHECK(p.mass == doctest::Approx(volume * 1850.0).epsilon(1e-14));
    CHECK(p.mass == doctest::Approx(5.37e-18).epsilon(2e-3));
    CHECK(p.charge == doctest::Approx(4.5 * p.mass).epsilon(1e-14));
    // "approximately 150 elementary charges"
    CHECK(p.elementary_charges == doctest::Approx(150.0).epsilon(0.02));
    CHECK(p.elementary_charges == doctest::Approx(p.charge / 1.602176634e-19).epsilon(1e-14));
}

TEST_CASE("particle derivation: degenerate and invalid inputs") {
    ParticleSpec spec;
    spec.radius = 1e-15;
    const auto tiny = derive_particle_properties(spec);
    CHECK(tiny.mass < 1e-40);
    CHECK(tiny.charge < 1e-39);
    spec.radius = 0.0;
    CHECK_THROWS_AS(derive_particle_properties(spec), ValidationError);
    spec.radius = 88.5e-9;
    spec.density = -1.0;
    CHECK_THROWS_AS(derive_particle_properties(spec), ValidationError);
}

TEST_CASE("mass derivation is exact against independent re-evaluation over a range of inputs") {
    for (double r : {10e-9, 50e-9, 88.5e-9, 300e-9, 1e-6}) {
        for (double rho : {1000.0, 1850.0, 2200.0}) {
            ParticleSpec s{r, rho, 3.0};
            const auto p = derive_particle_properties(s);
            const double m = rho * (4.0 * std::numbers::pi / 3.0) * std::pow(r, 3);
            CHECK(p.mass == doctest::Approx(m).epsilon(1e-13));
            CHECK(p.charge == doctest::Approx(3.0 * m).epsilon(1e-13));
        }
    }
}

TEST_CASE("default configuration validates without warnings") {
    const auto report = validate_config(default_config());
    CHECK(report.warnings.empty());
    CHECK(report.config.sample_rate == 234e3);
    // dt normalised to an integer number of steps per sample, no coarser than requested
    const double steps = 1.0 / (report.config.dt * report.config.sample_rate);
    CHECK(steps == doctest::Approx(std::round(steps)).epsilon(1e-12));
    CHECK(report.config.dt <= 250e-9 * 1.01);
}

TEST_CASE("validation is idempotent") {
    const auto once = validate_config(default_config()).config;
    const auto twice = validate_config(once).config;
    CHECK(once.dt == twice.dt);
    CHECK(config_to_json({twice, {}}) == config_to_json({once, {}}));
}

TEST_CASE("RF drive above 1e-2 mbar raises the arc-discharge warning") {
    auto cfg = default_config();
    cfg.environment.pressure = units::mbar(1.0);
    const auto report = validate_config(cfg);
    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("arc-discharge") != std::string::npos);
    cfg.paul.enabled = false;
    CHECK(validate_config(cfg).warnings.empty());
}

TEST_CASE("Mathieu-unstable drive is rejected") {
    auto cfg = default_config();
    const auto particle = derive_particle_properties(cfg.particle);
    const double q_now = mathieu_parameters(cfg.paul, particle).q_u;
    cfg.paul.rf_amplitude *= 1.2 / q_now;  // q = 1.2
    CHECK(mathieu_parameters(cfg.paul, particle).q_u == doctest::Approx(1.2));
    try {
        (void)validate_config(cfg);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("Mathieu-unstable") != std::string::npos);
    }
}

TEST_CASE("validation collects every problem") {
    auto cfg = default_config();
    cfg.dt = 1e-5;  // too coarse for the optical trap
    CHECK_THROWS_WITH_AS((void)validate_config(cfg), doctest::Contains("too coarse"), ValidationError);
    cfg = default_config();
    cfg.paul.rf_amplitude = -1.0;
    cfg.environment.gas_temperature = 0.0;
    try {
        (void)validate_config(cfg);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.problems().size() == 2);
    }
}

TEST_CASE("config JSON round trip and schema checks") {
    ExperimentConfig cfg;
    cfg.sim.environment.pressure = units::mbar(3e-6);
    cfg.sim.paul.trap_offset = {250e-9, 0.0, 0.0};
    cfg.sim.feedback.schedule = Schedule::optical;
    cfg.sim.seed = 42;
    cfg.protocol.evaluation_window = 0.4;
    const auto j = config_to_json(cfg);
    CHECK(j["environment"]["pressure_mbar"].get<double>() == doctest::Approx(3e-6));
    CHECK(j["paul"]["trap_offset_nm"][0].get<double>() == doctest::Approx(250.0));
    const auto back = config_from_json(j);
    CHECK(config_to_json(back) == j);
    CHECK(back.sim.environment.pressure == doctest::Approx(units::mbar(3e-6)));
    CHECK(back.sim.seed == 42);

    auto bad = j;
    bad["paul"]["no_such_key"] = 1;
    CHECK_THROWS_AS(config_from_json(bad), ValidationError);
    bad = j;
    bad["nonsense"] = nlohmann::json::object();
    CHECK_THROWS_AS(config_from_json(bad), ValidationError);

    // missing keys keep defaults
    const auto partial = config_from_json(nlohmann::json::parse(R"({"environment": {"pressure_mbar": 0.01}})"));
    CHECK(partial.sim.environment.pressure == doctest::Approx(1.0));
    CHECK(partial.sim.paul.rf_amplitude == default_config().paul.rf_amplitude);

    // optical geometry from frequencies
    const auto geo = config_from_json(nlohmann::json::parse(R"({"optical": {"frequencies_kHz": [69, 74, 15]}})"));
    CHECK(geo.sim.optical.waist_x == doctest::Approx(default_config().optical.waist_x).epsilon(1e-9));
}

TEST_CASE("load_config: default keyword and missing files") {
    CHECK(config_to_json(load_config("default")) == config_to_json(ExperimentConfig{}));
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ValidationError);
}
