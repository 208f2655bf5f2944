#include "smcprog/rng.hpp"

#include "smcprog/error.hpp"

namespace smcprog {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t run_seed, StreamPurpose purpose, std::uint64_t island,
                          std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t s = splitmix64(run_seed);
    for (std::uint64_t c : {static_cast<std::uint64_t>(purpose), island, a, b}) s = splitmix64(s ^ c);
    return s;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::index(std::uint64_t n) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "index(0)");
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t r;
    do r = engine_();
    while (r >= limit);
    return r % n;
}

double Rng::beta(double a, double b) {
    // Fresh distributions per draw: no cached normals carried between calls.
    std::gamma_distribution<double> ga(a, 1.0);
    std::gamma_distribution<double> gb(b, 1.0);
    const double x = ga(engine_);
    const double y = gb(engine_);
    if (x + y <= 0.0) return 0.5;
    return x / (x + y);
}

Rng Rng::split() { return Rng(splitmix64(engine_())); }

}  // namespace smcprog
