#include "smcprog/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "smcprog/error.hpp"

namespace smcprog {

double ess(std::span<const double> rewards, double lambda_prev, double lambda, double beta) {
    if (rewards.empty()) throw Error(ErrorCode::EmptyPopulation, "ess of an empty population");
    if (lambda < lambda_prev) throw Error(ErrorCode::InvalidArgument, "lambda < lambda_prev");
    const double scale = (lambda - lambda_prev) * beta;
    const double top = *std::max_element(rewards.begin(), rewards.end());
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double r : rewards) {
        const double u = std::exp(scale * (r - top));
        sum += u;
        sum_sq += u * u;
    }
    return sum * sum / sum_sq;
}

double next_lambda(std::span<const double> rewards, const AnnealState& state, const ScheduleOptions& options) {
    if (state.terminated) throw Error(ErrorCode::AlreadyTerminated, "schedule already reached lambda = 1");
    if (!(options.kappa > 0.0 && options.kappa < 1.0))
        throw Error(ErrorCode::InvalidArgument, "kappa must lie in (0, 1)");
    if (rewards.empty()) throw Error(ErrorCode::EmptyPopulation, "next_lambda of an empty population");

    const double prev = state.lambda;
    const double threshold = options.kappa * static_cast<double>(rewards.size());
    const double cap = std::min(1.0, prev + 1.0 / static_cast<double>(options.min_iterations));
    const auto ess_at = [&](double lam) { return ess(rewards, prev, lam, state.beta_target); };

    if (ess_at(cap) >= threshold) return cap;

    // Invariant: ess(lo) >= threshold > ess(hi).
    double lo = prev;
    double hi = cap;
    for (int i = 0; i < options.max_halvings; ++i) {
        if (hi - lo <= options.tolerance && lo > prev) break;
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (ess_at(mid) >= threshold)
            lo = mid;
        else
            hi = mid;
    }
    if (lo > prev) return lo;
    return std::nextafter(prev, 2.0);
}

AnnealState advance(const AnnealState& state, double new_lambda) {
    if (!(new_lambda > state.lambda) || new_lambda > 1.0)
        throw Error(ErrorCode::NonIncreasingLambda,
                    "lambda must increase within (" + std::to_string(state.lambda) + ", 1]");
    AnnealState next = state;
    next.lambda = new_lambda;
    next.iteration = state.iteration + 1;
    next.terminated = (new_lambda == 1.0);
    return next;
}

}  // namespace smcprog
