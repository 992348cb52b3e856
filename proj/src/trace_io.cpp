#include "hybridtrap/trace_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "hybridtrap/errors.hpp"

namespace hybridtrap {

namespace {

constexpr char kMagic[8] = {'H', 'T', 'J', 'R', 'N', 'L', '0', '1'};

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream f(path, mode);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    return f;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream f(path, mode);
    if (!f) throw ValidationError("cannot open '" + path + "'");
    return f;
}

void split_header(const std::string& cell, std::string& name, std::string& unit) {
    const auto open = cell.find('[');
    if (open == std::string::npos || cell.back() != ']') {
        name = cell;
        unit.clear();
        return;
    }
    name = cell.substr(0, open);
    unit = cell.substr(open + 1, cell.size() - open - 2);
}

template <class T>
void put(std::ostream& out, T v) {
    static_assert(std::endian::native == std::endian::little, "journal writer assumes a little-endian host");
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& in) {
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) throw ValidationError("journal truncated");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    if (s.size() > 0xFFFF) throw ValidationError("journal channel label too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const auto n = get<std::uint16_t>(in);
    std::string s(n, '\0');
    if (n > 0 && !in.read(s.data(), n)) throw ValidationError("journal truncated");
    return s;
}

}  // namespace

void write_trace_csv(const TimeTrace& trace, std::ostream& out) {
    out << "t[s]";
    for (std::size_t c = 0; c < trace.channel_count(); ++c) out << ',' << trace.names()[c] << '[' << trace.units()[c] << ']';
    out << '\n';
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << format_double(trace.time_at(i));
        for (std::size_t c = 0; c < trace.channel_count(); ++c) out << ',' << format_double(trace.channel(c)[i]);
        out << '\n';
    }
}

void write_trace_csv(const TimeTrace& trace, const std::string& path) {
    auto f = open_out(path);
    write_trace_csv(trace, f);
}

TimeTrace read_trace_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("trace CSV is empty");
    std::vector<std::string> names;
    std::vector<std::string> units;
    {
        std::stringstream ss(line);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            std::string name, unit;
            split_header(cell, name, unit);
            if (first) {
                if (name != "t") throw ValidationError("trace CSV must start with a t[s] column");
                first = false;
                continue;
            }
            names.push_back(name);
            units.push_back(unit);
        }
    }
    std::vector<double> times;
    std::vector<std::vector<double>> cols(names.size());
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) throw ValidationError("trace CSV row " + std::to_string(row) + ": bad number '" + cell + "'");
            if (c == 0) {
                times.push_back(v);
            } else if (c - 1 < cols.size()) {
                cols[c - 1].push_back(v);
            }
            ++c;
        }
        if (c != names.size() + 1) throw ValidationError("trace CSV row " + std::to_string(row) + ": wrong column count");
    }
    if (times.size() < 2) throw ValidationError("trace CSV needs at least two rows");
    const double rate = 1.0 / (times[1] - times[0]);
    TimeTrace trace({}, {}, rate, times[0]);
    for (std::size_t c = 0; c < names.size(); ++c) trace.append_column(names[c], units[c], std::move(cols[c]));
    return trace;
}

TimeTrace read_trace_csv(const std::string& path) {
    auto f = open_in(path);
    return read_trace_csv(f);
}

void write_trace_journal(const TimeTrace& trace, std::ostream& out) {
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, journal_version);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(trace.channel_count()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(trace.size()));
    put<double>(out, trace.sample_rate());
    put<double>(out, trace.start_time());
    for (std::size_t c = 0; c < trace.channel_count(); ++c) {
        put_string(out, trace.names()[c]);
        put_string(out, trace.units()[c]);
    }
    for (std::size_t c = 0; c < trace.channel_count(); ++c) {
        for (double v : trace.channel(c)) put<double>(out, v);
    }
}

void write_trace_journal(const TimeTrace& trace, const std::string& path) {
    auto f = open_out(path, std::ios::out | std::ios::binary);
    write_trace_journal(trace, f);
}

TimeTrace read_trace_journal(std::istream& in) {
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
        throw ValidationError("not a trace journal (bad magic)");
    }
    const auto version = get<std::uint32_t>(in);
    if (version != journal_version) throw ValidationError("unsupported journal version " + std::to_string(version));
    const auto channels = get<std::uint32_t>(in);
    const auto samples = get<std::uint64_t>(in);
    const auto rate = get<double>(in);
    const auto start = get<double>(in);
    std::vector<std::string> names(channels);
    std::vector<std::string> units(channels);
    for (std::uint32_t c = 0; c < channels; ++c) {
        names[c] = get_string(in);
        units[c] = get_string(in);
    }
    TimeTrace trace({}, {}, rate, start);
    for (std::uint32_t c = 0; c < channels; ++c) {
        std::vector<double> col(samples);
        for (auto& v : col) v = get<double>(in);
        trace.append_column(names[c], units[c], std::move(col));
    }
    return trace;
}

TimeTrace read_trace_journal(const std::string& path) {
    auto f = open_in(path, std::ios::in | std::ios::binary);
    return read_trace_journal(f);
}

void write_psd_csv(const Psd& psd, const std::string& unit, std::ostream& out) {
    out << "frequency[Hz],density[" << unit << "^2/Hz]\n";
    for (std::size_t k = 0; k < psd.frequencies.size(); ++k) {
        out << format_double(psd.frequencies[k]) << ',' << format_double(psd.density[k]) << '\n';
    }
}

}  // namespace hybridtrap
