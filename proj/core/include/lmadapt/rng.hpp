#pragma once

#include <cstdint>
#include <string_view>

namespace lmadapt {

// Counter-based deterministic random streams. All randomness in the project
// flows from one root seed through named sub-streams, so any draw is a pure
// function of (seed, stream name, counter) and reproduces bit-exactly across
// platforms.
//
// Algorithm:
//   mix64(z)     = SplitMix64 finalizer
//                  z ^= z>>30; z *= 0xbf58476d1ce4e5b9;
//                  z ^= z>>27; z *= 0x94d049bb133111eb; z ^= z>>31
//   root key     = mix64(seed)
//   fork(name)   = mix64(key ^ fnv1a64(name))
//   bits_at(i)   = mix64(key + (i+1) * 0x9e3779b97f4a7c15)
//   uniform_at(i)= ((bits_at(i) >> 11) + 0.5) * 2^-53          in (0,1)
//   normal_at(i) = inverse_normal_cdf(uniform_at(i))            AS241 rational
//                  approximation, |error| < 1e-15 over (0,1)
//
// Test vectors (frozen in tests/test_rng.cpp):
//   fnv1a64("")             = 0xcbf29ce484222325
//   fnv1a64("abc")          = 0xe71fa2190541574b
//   root key for seed 0     = 0x0
//   bits_at(0) under seed 0 = 0xe220a8397b1dcdaf
//
// The inverse normal needs log in its tails; std::log is not bit-stable
// across C libraries, so a fixed polynomial implementation is used instead
// (portable_log below). Core is compiled with -ffp-contract=off so no FMA
// contraction can change results between compilers.

uint64_t fnv1a64(std::string_view s) noexcept;
uint64_t mix64(uint64_t z) noexcept;

// Natural log from a fixed atanh series after range reduction. Accurate to a
// few ulp, uses only +,-,*,/ on doubles.
double portable_log(double x) noexcept;

// AS241 (PPND16). Domain (0,1); out-of-domain input returns +/-infinity.
double inverse_normal_cdf(double p) noexcept;

class RandomStream {
public:
    explicit RandomStream(uint64_t seed) noexcept : key_(mix64(seed)) {}

    static RandomStream with_key(uint64_t raw_key) noexcept {
        return RandomStream(raw_key, RawKey{});
    }

    RandomStream fork(std::string_view name) const noexcept {
        return RandomStream(mix64(key_ ^ fnv1a64(name)), RawKey{});
    }

    uint64_t bits_at(uint64_t i) const noexcept {
        return mix64(key_ + (i + 1) * 0x9e3779b97f4a7c15ULL);
    }

    double uniform_at(uint64_t i) const noexcept {
        return (static_cast<double>(bits_at(i) >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal_at(uint64_t i) const noexcept { return inverse_normal_cdf(uniform_at(i)); }

    // Unbiased-enough bounded draw (multiply-shift), n >= 1.
    uint64_t below_at(uint64_t i, uint64_t n) const noexcept {
        return static_cast<uint64_t>((static_cast<unsigned __int128>(bits_at(i)) * n) >> 64);
    }

    // Stateful convenience over the same counter sequence.
    uint64_t next_bits() noexcept { return bits_at(cursor_++); }
    double next_uniform() noexcept { return uniform_at(cursor_++); }
    double next_normal() noexcept { return normal_at(cursor_++); }
    uint64_t next_below(uint64_t n) noexcept { return below_at(cursor_++, n); }

    uint64_t key() const noexcept { return key_; }

private:
    struct RawKey {};
    RandomStream(uint64_t key, RawKey) noexcept : key_(key) {}

    uint64_t key_;
    uint64_t cursor_ = 0;
};

}  // namespace lmadapt
