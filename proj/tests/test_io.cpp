#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hybridtrap/config_io.hpp"
#include "hybridtrap/errors.hpp"
#include "hybridtrap/simulation.hpp"
#include "hybridtrap/trace_io.hpp"

using namespace hybridtrap;

namespace {

TimeTrace short_trace() {
    auto cfg = default_config();
    cfg.environment.pressure = 1.0;
    return simulate(cfg, 2e-3);
}

void check_equal(const TimeTrace& a, const TimeTrace& b) {
    REQUIRE(a.names() == b.names());
    CHECK(a.units() == b.units());
    CHECK(a.size() == b.size());
    CHECK(a.sample_rate() == doctest::Approx(b.sample_rate()).epsilon(1e-12));
    CHECK(a.start_time() == b.start_time());
    for (std::size_t c = 0; c < a.channel_count(); ++c) {
        const auto x = a.channel(c);
        const auto y = b.channel(c);
        for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(x[i] == y[i]);
    }
}

}  // namespace

TEST_CASE("CSV trace round trip is exact") {
    const auto tr = short_trace();
    std::stringstream ss;
    write_trace_csv(tr, ss);
    const std::string text = ss.str();
    CHECK(text.rfind("t[s],", 0) == 0);
    std::stringstream in(text);
    check_equal(tr, read_trace_csv(in));
}

TEST_CASE("journal round trip is exact and the header is little-endian") {
    const auto tr = short_trace();
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_trace_journal(tr, ss);
    const std::string bytes = ss.str();
    REQUIRE(bytes.size() > 32);
    CHECK(bytes.substr(0, 8) == "HTJRNL01");
    CHECK(static_cast<unsigned char>(bytes[8]) == journal_version);
    CHECK(bytes[9] == 0);
    CHECK(static_cast<unsigned char>(bytes[12]) == tr.channel_count());
    const std::uint64_t payload = 8 * tr.channel_count() * tr.size();
    CHECK(bytes.size() > payload);
    std::stringstream in(bytes, std::ios::in | std::ios::binary);
    check_equal(tr, read_trace_journal(in));
}

TEST_CASE("malformed traces are rejected") {
    std::stringstream bad_header("time,x\n0,1\n");
    CHECK_THROWS_AS(read_trace_csv(bad_header), ValidationError);
    std::stringstream ragged("t[s],x[m]\n0,1\n1e-3\n");
    CHECK_THROWS_AS(read_trace_csv(ragged), ValidationError);
    std::stringstream not_number("t[s],x[m]\n0,abc\n1,2\n");
    CHECK_THROWS_AS(read_trace_csv(not_number), ValidationError);
    std::stringstream wrong_magic("NOTAJRNL0000000000000000000000000000", std::ios::in | std::ios::binary);
    CHECK_THROWS_AS(read_trace_journal(wrong_magic), ValidationError);

    const auto tr = short_trace();
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_trace_journal(tr, ss);
    const std::string bytes = ss.str();
    std::stringstream truncated(bytes.substr(0, bytes.size() - 5), std::ios::in | std::ios::binary);
    CHECK_THROWS_AS(read_trace_journal(truncated), ValidationError);
}

TEST_CASE("file round trips and PSD output") {
    const auto dir = std::filesystem::temp_directory_path() / "hybridtrap_test_io";
    std::filesystem::create_directories(dir);
    const auto tr = short_trace();
    write_trace_csv(tr, (dir / "t.csv").string());
    write_trace_journal(tr, (dir / "t.htj").string());
    check_equal(tr, read_trace_csv((dir / "t.csv").string()));
    check_equal(tr, read_trace_journal((dir / "t.htj").string()));
    CHECK_THROWS_AS(read_trace_csv((dir / "missing.csv").string()), ValidationError);

    Psd psd;
    psd.frequencies = {0.0, 10.0};
    psd.density = {1.5, 2.5e-20};
    std::stringstream out;
    write_psd_csv(psd, "V", out);
    std::string header, row;
    std::getline(out, header);
    std::getline(out, row);
    CHECK(header == "frequency[Hz],density[V^2/Hz]");
    CHECK(row == "0,1.5");

    ExperimentConfig cfg;
    cfg.sim.seed = 77;
    cfg.protocol.evaluation_window = 0.4;
    save_config(cfg, (dir / "c.json").string());
    const auto back = load_config((dir / "c.json").string());
    CHECK(back.sim.seed == 77);
    CHECK(back.protocol.evaluation_window == doctest::Approx(0.4));
    CHECK(config_to_json(back) == config_to_json(cfg));
    std::filesystem::remove_all(dir);
}
