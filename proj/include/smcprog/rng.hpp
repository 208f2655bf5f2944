#pragma once

// Random streams.
//
// A run carries one 64-bit seed. Every consumer of randomness gets its own
// stream whose seed is derived from (run seed, purpose, island, a, b) by
// folding each coordinate through splitmix64:
//
//     s = splitmix64(run_seed)
//     for c in (purpose, island, a, b): s = splitmix64(s ^ c)
//
// Typical coordinates: resampling uses (island, iteration); the per-chain
// streams use (island, iteration, chain index). Streams are therefore pure
// functions of their coordinates, which keeps runs reproducible under any
// degree of parallelism and lets a resumed run re-derive them without
// persisting generator state.

#include <cstdint>
#include <limits>
#include <random>

namespace smcprog {

enum class StreamPurpose : std::uint64_t {
    Init = 1,
    Resample = 2,
    Thompson = 3,
    Accept = 4,
    Proposal = 5,
    Migration = 6,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

std::uint64_t derive_seed(std::uint64_t run_seed, StreamPurpose purpose, std::uint64_t island,
                          std::uint64_t a = 0, std::uint64_t b = 0) noexcept;

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static constexpr result_type min() { return std::numeric_limits<result_type>::min(); }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer on [0, n); n > 0.
    std::uint64_t index(std::uint64_t n);
    /// Beta(a, b) through two gamma draws.
    double beta(double a, double b);
    /// Child stream seeded from this one.
    Rng split();

private:
    std::mt19937_64 engine_;
};

inline Rng make_stream(std::uint64_t run_seed, StreamPurpose purpose, std::uint64_t island,
                       std::uint64_t a = 0, std::uint64_t b = 0) {
    return Rng(derive_seed(run_seed, purpose, island, a, b));
}

}  // namespace smcprog
