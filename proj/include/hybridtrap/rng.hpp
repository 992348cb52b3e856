#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace hybridtrap {

/// Philox4x32-10 counter-based generator emitting 64-bit words (two lanes each). The key is
/// the run seed and the upper half of the counter is a stream id, so (seed, stream) pairs give
/// independent, order-free streams.
class PhiloxStream {
public:
    using result_type = std::uint64_t;

    PhiloxStream(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (index_ == kBuffered) {
            refill();
            index_ = 0;
        }
        return buffer_[index_++];
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * (1.0 / 9007199254740992.0); }

private:
    static constexpr std::size_t kBlocks = 4;
    static constexpr std::size_t kBuffered = 2 * kBlocks;

    // Four consecutive counter blocks per refill; the independent rounds interleave.
    void refill() noexcept {
        std::array<std::uint32_t, kBlocks> c0, c1, c2, c3;
        for (std::size_t j = 0; j < kBlocks; ++j) {
            const std::uint64_t block = block_ + j;
            c0[j] = static_cast<std::uint32_t>(block);
            c1[j] = static_cast<std::uint32_t>(block >> 32);
            c2[j] = stream_lo_;
            c3[j] = stream_hi_;
        }
        std::uint32_t k0 = key_[0];
        std::uint32_t k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            for (std::size_t j = 0; j < kBlocks; ++j) {
                const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * c0[j];
                const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * c2[j];
                const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1[j] ^ k0;
                const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3[j] ^ k1;
                c1[j] = static_cast<std::uint32_t>(p1);
                c3[j] = static_cast<std::uint32_t>(p0);
                c0[j] = n0;
                c2[j] = n2;
            }
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        for (std::size_t j = 0; j < kBlocks; ++j) {
            buffer_[2 * j] = (static_cast<std::uint64_t>(c1[j]) << 32) | c0[j];
            buffer_[2 * j + 1] = (static_cast<std::uint64_t>(c3[j]) << 32) | c2[j];
        }
        block_ += kBlocks;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint32_t stream_lo_;
    std::uint32_t stream_hi_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, kBuffered> buffer_{};
    std::size_t index_ = kBuffered;
};

/// Sub-stream ids within one trial.
enum class StreamPurpose : std::uint64_t { thermal = 0, control_noise = 1, record_noise = 2, initial_state = 3, misc = 4 };

constexpr std::uint64_t stream_id(std::uint64_t trial, StreamPurpose purpose) {
    return trial * 8u + static_cast<std::uint64_t>(purpose);
}

}  // namespace hybridtrap
