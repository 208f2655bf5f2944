#pragma once

#include <span>

#include "smcprog/core.hpp"

namespace smcprog {

/// Effective sample size of the incremental weights
/// u_n = exp((lambda - lambda_prev) * beta * R_n), i.e. (sum u)^2 / sum u^2.
/// Evaluated after shifting the log-weights by their maximum.
[[nodiscard]] double ess(std::span<const double> rewards, double lambda_prev, double lambda, double beta);

struct ScheduleOptions {
    double kappa = 0.9;
    int min_iterations = 3;
    double tolerance = 1e-6;
    int max_halvings = 60;
};

/// Largest lambda in (lambda_prev, min(1, lambda_prev + 1/min_iterations)]
/// with ESS >= kappa * N, located by bisection. The upper end of the
/// interval is returned as-is when it already satisfies the threshold, so
/// the endpoint lambda = 1 is hit exactly.
[[nodiscard]] double next_lambda(std::span<const double> rewards, const AnnealState& state,
                                 const ScheduleOptions& options);

/// Step the schedule. terminated is set iff new_lambda == 1.
[[nodiscard]] AnnealState advance(const AnnealState& state, double new_lambda);

}  // namespace smcprog
