#pragma once

#include <iosfwd>
#include <string>

#include "hybridtrap/analysis.hpp"
#include "hybridtrap/dynamics.hpp"

namespace hybridtrap {

/// CSV layout: header `t[s],name[unit],...`, then one row per sample with `%.17g` values,
/// so a write/read round trip is exact.
void write_trace_csv(const TimeTrace& trace, std::ostream& out);
void write_trace_csv(const TimeTrace& trace, const std::string& path);
/// Throws ValidationError on malformed input. The sample rate is taken from the first two time stamps.
TimeTrace read_trace_csv(std::istream& in);
TimeTrace read_trace_csv(const std::string& path);

/// Binary journal, all integers and floats little-endian:
///   magic "HTJRNL01" (8 bytes), u32 version (=1), u32 channel count C, u64 sample count N,
///   f64 sample rate, f64 start time, then C entries of (u16 length + UTF-8 name,
///   u16 length + UTF-8 unit), then C columns of N f64 values each.
inline constexpr std::uint32_t journal_version = 1;
void write_trace_journal(const TimeTrace& trace, std::ostream& out);
void write_trace_journal(const TimeTrace& trace, const std::string& path);
TimeTrace read_trace_journal(std::istream& in);
TimeTrace read_trace_journal(const std::string& path);

/// `frequency[Hz],density[<unit>^2/Hz]` rows.
void write_psd_csv(const Psd& psd, const std::string& unit, std::ostream& out);

}  // namespace hybridtrap
