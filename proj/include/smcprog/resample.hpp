#pragma once

// Parent reweighting and resampling.
//
// With the time-reversal backward kernel the general SMC incremental weight
//     w_t = gamma_t(x_t) L_{t-1}(x_t, x_{t-1}) / (gamma_{t-1}(x_{t-1}) M_t^K(x_{t-1}, x_t))
// collapses to gamma_t(x_{t-1}) / gamma_{t-1}(x_{t-1}) = exp(delta_beta * R(x_{t-1})):
// the forward and backward kernels cancel, so the weight depends only on the
// parent's reward and the mutation kernel never has to be evaluated here.

#include <cstddef>
#include <span>
#include <vector>

#include "smcprog/rng.hpp"

namespace smcprog {

struct WeightVector {
    std::vector<double> log_weights;
    std::vector<double> normalized;
};

/// log w_n = delta_beta * R_n, normalized by log-sum-exp.
[[nodiscard]] WeightVector compute_weights(std::span<const double> rewards, double delta_beta);

/// Systematic resampling with an explicit offset u in [0, 1/N).
/// Index i picks the smallest n whose cumulative weight exceeds u + i/N.
/// The result is sorted non-decreasing.
[[nodiscard]] std::vector<std::size_t> systematic_resample_with_offset(const WeightVector& weights,
                                                                       double offset);

/// Draws the single offset from rng and delegates.
[[nodiscard]] std::vector<std::size_t> systematic_resample(const WeightVector& weights, Rng& rng);

}  // namespace smcprog
