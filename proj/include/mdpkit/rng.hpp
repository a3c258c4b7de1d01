#pragma once

#include <array>
#include <cstdint>

namespace mdpkit {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Philox4x32-10 counter-based generator (Salmon et al., Random123).
/// Counter-based means the stream is a pure function of (key, counter):
/// identical output on every platform, O(1) jump, and cheap splitting by
/// deriving a fresh key per (seed, stream) pair. Every simulation records
/// the (seed, stream) it consumed.
class Philox {
public:
    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {
        std::uint64_t s = seed ^ 0x243f6a8885a308d3ULL;
        (void)detail::splitmix64(s);
        std::uint64_t k = detail::splitmix64(s) ^ (stream * 0x9e3779b97f4a7c15ULL);
        std::uint64_t mixed = detail::splitmix64(k);
        key_ = {static_cast<std::uint32_t>(mixed), static_cast<std::uint32_t>(mixed >> 32)};
        ctr_ = {0, 0, 0, 0};
        pos_ = 4;
    }

    /// One 10-round Philox block; exposed for the known-answer tests.
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;
                key[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t(0xD2511F53u) * ctr[0];
            const std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * ctr[2];
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

    std::uint32_t next_u32() {
        if (pos_ == 4) refill();
        return buf_[pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    /// Uniform in [0,1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Unbiased uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    /// Independent generator for a derived substream.
    Philox split(std::uint64_t substream) const {
        std::uint64_t mix = stream_ ^ 0x5851f42d4c957f2dULL;
        (void)detail::splitmix64(mix);
        return Philox(seed_, detail::splitmix64(mix) + substream);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

private:
    void refill() {
        buf_ = block(ctr_, key_);
        pos_ = 0;
        for (int i = 0; i < 4; ++i) {
            if (++ctr_[i] != 0) break;
        }
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> ctr_;
    std::array<std::uint32_t, 4> buf_{};
    int pos_;
};

}  // namespace mdpkit
