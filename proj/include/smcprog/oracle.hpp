#pragma once

// Brute-force ground truth on enumerable spaces.
//
// Quantities, for a space with prior p0 and reward R:
//   p_t(x)      = p0(x) exp(beta_t R(x)) / Z_t
//   Gamma       = max_x p*(x) / p0(x)                      <= exp(beta Delta_R)
//   bridge Linf = max_x p_t(x) / p_{t-1}(x)                <= exp(delta_beta Delta_R)
//   gamma^2     = ||p_t / p_{t-1}||^2 in L2(p_{t-1}) = sum p_t^2 / p_{t-1}
//                 (ESS / N estimates 1 / gamma^2 on iid populations)
//   d_K         = max_x TV(P^K(x, .), p_t), fitted as C rho^K
//
// The backward kernel of the SMC weight, the warmness of the initial law and
// the internal precision of the mixing argument are analytical devices only;
// nothing here evaluates them.

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "smcprog/core.hpp"
#include "smcprog/finite.hpp"
#include "smcprog/mutate.hpp"

namespace smcprog {

inline constexpr std::size_t kMaxOracleStates = 4096;

/// p0 exp(beta_t R) / Z_t with Z_t summed in log space.
[[nodiscard]] std::vector<double> exact_tilted(std::span<const double> prior, std::span<const double> rewards,
                                               double beta_t);
[[nodiscard]] std::vector<double> exact_tilted(const FiniteSpace& space, double beta_t);

/// Half the L1 distance. Throws Error(LengthMismatch).
[[nodiscard]] double tv_distance(std::span<const double> p, std::span<const double> q);

[[nodiscard]] double expectation(std::span<const double> p, std::span<const double> f);

/// f = (R - R-) / Delta_R, or all zeros when Delta_R = 0.
[[nodiscard]] std::vector<double> normalized_reward(const FiniteSpace& space);

/// Dense row-major transition matrix.
struct TransitionMatrix {
    std::size_t n = 0;
    std::vector<double> data;

    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
    [[nodiscard]] double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
};

/// One MH step: off-diagonal Q(x, y) alpha(x, y), rejected mass on the
/// diagonal. Throws Error(DensityUnavailable) for kernels without density
/// and Error(InvalidArgument) above kMaxOracleStates states.
[[nodiscard]] TransitionMatrix mh_transition_matrix(const FiniteSpace& space, double beta_t,
                                                    const ProposalKernel& kernel,
                                                    AcceptanceMode mode = AcceptanceMode::FullRatio);

/// max_y |sum_x p(x) P(x, y) - p(y)|.
[[nodiscard]] double invariance_residual(std::span<const double> p, const TransitionMatrix& matrix);

/// Residual of p_t under the exact MH matrix.
[[nodiscard]] double check_invariance(const FiniteSpace& space, double beta_t, const ProposalKernel& kernel,
                                      AcceptanceMode mode = AcceptanceMode::FullRatio);

struct ErgodicityFit {
    double rho_hat = 0.0;
    double c_hat = 0.0;
    double r_squared = 0.0;
    std::vector<double> d;  // d_K for K = 1..k_max
    std::size_t points_used = 0;
};

/// d_K via matrix powers, then least squares of log d_K on K after dropping
/// K = 1, 2 and any d_K below 1e-13. Throws Error(NonErgodic) when d_K does
/// not decay.
[[nodiscard]] ErgodicityFit fit_ergodicity_rate(const FiniteSpace& space, double beta_t, const ProposalKernel& kernel,
                                                int k_max = 40, AcceptanceMode mode = AcceptanceMode::FullRatio);
[[nodiscard]] ErgodicityFit fit_ergodicity_rate(std::span<const double> target, const TransitionMatrix& matrix,
                                                int k_max = 40);

[[nodiscard]] double path_gamma(const FiniteSpace& space, double beta);
[[nodiscard]] double path_gamma(std::span<const double> prior, std::span<const double> rewards, double beta);
[[nodiscard]] double bridge_linf(const FiniteSpace& space, double beta_prev, double beta_t);
[[nodiscard]] double bridge_l2_squared(const FiniteSpace& space, double beta_prev, double beta_t);

struct Theorem1Run {
    std::uint64_t seed = 0;
    double eta = 0.0;  // population mean of f at termination
    double abs_error = 0.0;
    bool success = false;
    std::vector<double> lambdas;
    std::vector<double> ess_fractions;
    std::vector<double> gamma_sq;  // exact ||p_t/p_{t-1}||^2 per step
    std::vector<double> bridge_linf;
    std::vector<double> tv_to_target;  // TV(empirical population, p_t) per step
    int iterations = 0;
    long long budget = 0;  // N * T * K
};

struct Theorem1Result {
    double p_star_f = 0.0;
    double epsilon = 0.0;
    double path_gamma = 0.0;
    double gamma_bound = 0.0;  // exp(beta Delta_R)
    int successes = 0;
    int runs = 0;
    [[nodiscard]] double success_rate() const { return runs ? static_cast<double>(successes) / runs : 0.0; }
    std::vector<Theorem1Run> per_run;
};

/// Runs the full single-island engine n_runs times (seeds config.seed + r)
/// and counts runs with |eta_T(f) - p*(f)| <= epsilon, f = (R - R-) / Delta_R.
[[nodiscard]] Theorem1Result theorem1_experiment(const FiniteSpace& space, const ProposalKernel& kernel,
                                                 RunConfig config, int n_runs, double epsilon);

/// Reference configuration: {0,1}^8, beta 5, N 200, K 10, kappa 0.5, no inspirations.
[[nodiscard]] RunConfig theorem1_reference_config();

[[nodiscard]] nlohmann::json theorem1_to_json(const Theorem1Result& result);

}  // namespace smcprog
