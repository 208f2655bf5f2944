#include "smcprog/resample.hpp"

#include <algorithm>
#include <cmath>

#include "smcprog/error.hpp"

namespace smcprog {

WeightVector compute_weights(std::span<const double> rewards, double delta_beta) {
    if (rewards.empty()) throw Error(ErrorCode::EmptyPopulation, "compute_weights of an empty population");
    if (delta_beta < 0.0) throw Error(ErrorCode::InvalidArgument, "delta_beta must be >= 0");

    WeightVector w;
    w.log_weights.reserve(rewards.size());
    for (double r : rewards) w.log_weights.push_back(delta_beta * r);

    const double top = *std::max_element(w.log_weights.begin(), w.log_weights.end());
    w.normalized.reserve(rewards.size());
    double total = 0.0;
    for (double lw : w.log_weights) {
        w.normalized.push_back(std::exp(lw - top));
        total += w.normalized.back();
    }
    for (double& x : w.normalized) x /= total;
    return w;
}

std::vector<std::size_t> systematic_resample_with_offset(const WeightVector& weights, double offset) {
    const auto& w = weights.normalized;
    const std::size_t n = w.size();
    if (n == 0) throw Error(ErrorCode::EmptyPopulation, "resampling an empty weight vector");
    const double step = 1.0 / static_cast<double>(n);
    if (!(offset >= 0.0 && offset < step)) throw Error(ErrorCode::InvalidArgument, "offset outside [0, 1/N)");

    std::size_t last_positive = 0;
    for (std::size_t j = 0; j < n; ++j)
        if (w[j] > 0.0) last_positive = j;

    std::vector<std::size_t> out;
    out.reserve(n);
    double cumulative = w[0];
    std::size_t j = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double point = offset + static_cast<double>(i) * step;
        while (cumulative <= point && j + 1 < n) cumulative += w[++j];
        // Rounding can leave the total a hair below 1; never land on a zero-weight tail.
        out.push_back(cumulative > point ? j : last_positive);
    }
    return out;
}

std::vector<std::size_t> systematic_resample(const WeightVector& weights, Rng& rng) {
    const double n = static_cast<double>(weights.normalized.size());
    if (n == 0) throw Error(ErrorCode::EmptyPopulation, "resampling an empty weight vector");
    const double offset = std::min(rng.uniform() / n, std::nextafter(1.0 / n, 0.0));
    return systematic_resample_with_offset(weights, offset);
}

}  // namespace smcprog
