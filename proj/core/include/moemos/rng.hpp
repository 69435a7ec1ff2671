// Copyright (c) 2026 moemos authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

namespace moemos {

/// Counter-based deterministic generator (splitmix64 over a stream position).
/// The output sequence is a pure function of (seed, position), so identical
/// seeds and call sequences produce identical streams on every platform; the
/// standard library distributions are avoided for the same reason.
class RngState {
public:
    RngState() = default;
    explicit RngState(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + (++pos_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller. Consumes exactly two draws; the first
    /// uniform is offset by half an ulp so log() never sees zero.
    double next_normal() {
        double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
        double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double next_normal(double mean, double stddev) {
        return mean + stddev * next_normal();
    }

    /// Uniform integer in [0, n). n must be nonzero.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Independent substream; forking does not advance this stream.
    RngState split(std::uint64_t stream_id) const {
        std::uint64_t z = seed_ ^ (0xD2B74407B1CE6E93ULL * (stream_id + 1));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return RngState(z ^ (z >> 31));
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t position() const { return pos_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t pos_ = 0;
};

} // namespace moemos
