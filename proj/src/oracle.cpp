#include "smcprog/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "smcprog/error.hpp"
#include "smcprog/island.hpp"

namespace smcprog {

std::vector<double> exact_tilted(std::span<const double> prior, std::span<const double> rewards, double beta_t) {
    if (prior.size() != rewards.size()) throw Error(ErrorCode::LengthMismatch, "prior and rewards differ in length");
    if (prior.empty()) throw Error(ErrorCode::EmptyPopulation, "empty space");
    std::vector<double> logw(prior.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < prior.size(); ++i) {
        logw[i] = prior[i] > 0.0 ? std::log(prior[i]) + beta_t * rewards[i] : -std::numeric_limits<double>::infinity();
        top = std::max(top, logw[i]);
    }
    std::vector<double> out(prior.size());
    double z = 0.0;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        out[i] = std::exp(logw[i] - top);
        z += out[i];
    }
    for (double& x : out) x /= z;
    return out;
}

std::vector<double> exact_tilted(const FiniteSpace& space, double beta_t) {
    return exact_tilted(space.prior(), space.rewards(), beta_t);
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw Error(ErrorCode::LengthMismatch, "distributions differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

double expectation(std::span<const double> p, std::span<const double> f) {
    if (p.size() != f.size()) throw Error(ErrorCode::LengthMismatch, "distribution and function differ in length");
    return std::inner_product(p.begin(), p.end(), f.begin(), 0.0);
}

std::vector<double> normalized_reward(const FiniteSpace& space) {
    const RewardBounds b = space.bounds();
    std::vector<double> f(space.size(), 0.0);
    if (b.delta_r > 0.0)
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = (space.rewards()[i] - b.r_minus) / b.delta_r;
    return f;
}

TransitionMatrix mh_transition_matrix(const FiniteSpace& space, double beta_t, const ProposalKernel& kernel,
                                      AcceptanceMode mode) {
    if (!kernel.has_density()) throw Error(ErrorCode::DensityUnavailable, "kernel exposes no density");
    const std::size_t n = space.size();
    if (n > kMaxOracleStates) throw Error(ErrorCode::InvalidArgument, "oracle spaces are capped at 4096 states");
    const auto& states = space.states();
    const auto& p0 = space.prior();
    const auto& r = space.rewards();
    MutationContext ctx;
    ctx.beta_t = beta_t;

    TransitionMatrix m{n, std::vector<double>(n * n, 0.0)};
    for (std::size_t x = 0; x < n; ++x) {
        double moved = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (y == x) continue;
            const auto q_xy = kernel.density(states[x], states[y], ctx);
            if (!q_xy) throw Error(ErrorCode::DensityUnavailable, "kernel returned no density");
            if (*q_xy <= 0.0) continue;
            double alpha;
            if (mode == AcceptanceMode::RewardOnly) {
                alpha = acceptance_reward_only(r[x], r[y], beta_t);
            } else if (!(p0[x] > 0.0)) {
                alpha = 1.0;
            } else {
                const auto q_yx = kernel.density(states[y], states[x], ctx);
                if (!q_yx) throw Error(ErrorCode::DensityUnavailable, "kernel returned no density");
                const double ratio = (p0[y] / p0[x]) * std::exp(beta_t * (r[y] - r[x]));
                alpha = acceptance_full_ratio(ratio, *q_xy, *q_yx);
            }
            m(x, y) = *q_xy * alpha;
            moved += m(x, y);
        }
        m(x, x) = 1.0 - moved;
    }
    return m;
}

double invariance_residual(std::span<const double> p, const TransitionMatrix& matrix) {
    if (p.size() != matrix.n) throw Error(ErrorCode::LengthMismatch, "distribution and matrix differ in size");
    double worst = 0.0;
    for (std::size_t y = 0; y < matrix.n; ++y) {
        double mass = 0.0;
        for (std::size_t x = 0; x < matrix.n; ++x) mass += p[x] * matrix(x, y);
        worst = std::max(worst, std::abs(mass - p[y]));
    }
    return worst;
}

double check_invariance(const FiniteSpace& space, double beta_t, const ProposalKernel& kernel, AcceptanceMode mode) {
    return invariance_residual(exact_tilted(space, beta_t), mh_transition_matrix(space, beta_t, kernel, mode));
}

ErgodicityFit fit_ergodicity_rate(std::span<const double> target, const TransitionMatrix& matrix, int k_max) {
    if (target.size() != matrix.n) throw Error(ErrorCode::LengthMismatch, "target and matrix differ in size");
    if (k_max < 4) throw Error(ErrorCode::InvalidArgument, "k_max must be >= 4");
    const auto n = static_cast<Eigen::Index>(matrix.n);
    Eigen::MatrixXd p(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) p(i, j) = matrix(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    Eigen::RowVectorXd pi(n);
    for (Eigen::Index j = 0; j < n; ++j) pi(j) = target[static_cast<std::size_t>(j)];

    ErgodicityFit fit;
    Eigen::MatrixXd power = p;
    for (int k = 1; k <= k_max; ++k) {
        if (k > 1) power = power * p;
        const Eigen::VectorXd tv = 0.5 * (power.rowwise() - pi).cwiseAbs().rowwise().sum();
        fit.d.push_back(tv.maxCoeff());
    }

    const double last = fit.d.back();
    const double mid = fit.d[static_cast<std::size_t>(k_max / 2) - 1];
    if (last > 1e-9 && last >= 0.999 * mid)
        throw Error(ErrorCode::NonErgodic, "worst-case TV does not decay (d_" + std::to_string(k_max) +
                                               " = " + std::to_string(last) + ")");

    std::vector<double> xs, ys;
    for (int k = 3; k <= k_max; ++k) {
        const double d = fit.d[static_cast<std::size_t>(k) - 1];
        if (d < 1e-13) break;
        xs.push_back(k);
        ys.push_back(std::log(d));
    }
    fit.points_used = xs.size();
    if (xs.size() < 2) {
        fit.rho_hat = 0.0;
        fit.c_hat = fit.d.front();
        fit.r_squared = 1.0;
        return fit;
    }
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (intercept + slope * xs[i]);
        ss_res += e * e;
    }
    fit.rho_hat = std::exp(slope);
    fit.c_hat = std::exp(intercept);
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

ErgodicityFit fit_ergodicity_rate(const FiniteSpace& space, double beta_t, const ProposalKernel& kernel, int k_max,
                                  AcceptanceMode mode) {
    return fit_ergodicity_rate(exact_tilted(space, beta_t), mh_transition_matrix(space, beta_t, kernel, mode), k_max);
}

double path_gamma(std::span<const double> prior, std::span<const double> rewards, double beta) {
    const auto target = exact_tilted(prior, rewards, beta);
    double g = 0.0;
    for (std::size_t i = 0; i < prior.size(); ++i)
        if (prior[i] > 0.0) g = std::max(g, target[i] / prior[i]);
    return g;
}

double path_gamma(const FiniteSpace& space, double beta) { return path_gamma(space.prior(), space.rewards(), beta); }

double bridge_linf(const FiniteSpace& space, double beta_prev, double beta_t) {
    const auto prev = exact_tilted(space, beta_prev);
    const auto next = exact_tilted(space, beta_t);
    double g = 0.0;
    for (std::size_t i = 0; i < prev.size(); ++i)
        if (prev[i] > 0.0) g = std::max(g, next[i] / prev[i]);
    return g;
}

double bridge_l2_squared(const FiniteSpace& space, double beta_prev, double beta_t) {
    const auto prev = exact_tilted(space, beta_prev);
    const auto next = exact_tilted(space, beta_t);
    double s = 0.0;
    for (std::size_t i = 0; i < prev.size(); ++i)
        if (prev[i] > 0.0) s += next[i] * next[i] / prev[i];
    return s;
}

RunConfig theorem1_reference_config() {
    RunConfig c;
    c.n_islands = 1;
    c.particles_per_island = 200;
    c.n_proposals = 10;
    c.beta = 5.0;
    c.kappa = 0.5;
    c.top_k_inspiration = 0;
    c.diverse_inspirations = 0;
    c.migration_size = 0;
    c.kernel_selection = {KernelSelectionMode::Fixed, KernelId::DiffNoInspo};
    c.acceptance_mode = AcceptanceMode::FullRatio;
    c.seed = 1;
    return c;
}

Theorem1Result theorem1_experiment(const FiniteSpace& space, const ProposalKernel& kernel, RunConfig config,
                                   int n_runs, double epsilon) {
    config.n_islands = 1;
    const auto f = normalized_reward(space);
    const RewardBounds bounds = space.bounds();

    Theorem1Result res;
    res.epsilon = epsilon;
    res.p_star_f = expectation(exact_tilted(space, config.beta), f);
    res.path_gamma = path_gamma(space, config.beta);
    res.gamma_bound = std::exp(config.beta * bounds.delta_r);

    const FiniteSpaceEvaluator evaluator(space, config.reward_floor);
    const FiniteSpacePrior prior(space);
    const std::uint64_t base_seed = config.seed;

    for (int r = 0; r < n_runs; ++r) {
        config.seed = base_seed + static_cast<std::uint64_t>(r);
        Theorem1Run run;
        run.seed = config.seed;
        Engine engine(config, {&kernel, &evaluator, &prior, nullptr});
        engine.set_observer([&](const IslandState& island, const IterationReport& rep) {
            const double bp = rep.lambda_prev * config.beta;
            const double bt = rep.lambda * config.beta;
            run.lambdas.push_back(rep.lambda);
            run.ess_fractions.push_back(rep.ess / static_cast<double>(rep.rewards.size()));
            run.gamma_sq.push_back(bridge_l2_squared(space, bp, bt));
            run.bridge_linf.push_back(bridge_linf(space, bp, bt));
            std::vector<double> empirical(space.size(), 0.0);
            for (const auto& p : island.particles)
                if (const auto idx = space.index_of(p.program)) empirical[*idx] += 1.0;
            for (double& x : empirical) x /= static_cast<double>(island.particles.size());
            run.tv_to_target.push_back(tv_distance(empirical, exact_tilted(space, bt)));
        });
        engine.run();

        const auto& particles = engine.islands().front().particles;
        double total = 0.0;
        for (const auto& p : particles) {
            const auto idx = space.index_of(p.program);
            total += idx ? f[*idx] : 0.0;
        }
        run.eta = total / static_cast<double>(particles.size());
        run.abs_error = std::abs(run.eta - res.p_star_f);
        run.success = run.abs_error <= epsilon;
        run.iterations = engine.islands().front().anneal.iteration;
        run.budget = static_cast<long long>(config.particles_per_island) * run.iterations * config.n_proposals;
        res.successes += run.success;
        ++res.runs;
        res.per_run.push_back(std::move(run));
    }
    return res;
}

nlohmann::json theorem1_to_json(const Theorem1Result& result) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : result.per_run) {
        runs.push_back({{"seed", r.seed},
                        {"eta", r.eta},
                        {"abs_error", r.abs_error},
                        {"success", r.success},
                        {"iterations", r.iterations},
                        {"budget", r.budget},
                        {"lambdas", r.lambdas},
                        {"ess_fractions", r.ess_fractions},
                        {"gamma_sq", r.gamma_sq},
                        {"gamma_sq_max", r.gamma_sq.empty() ? 0.0 : *std::max_element(r.gamma_sq.begin(), r.gamma_sq.end())},
                        {"bridge_linf", r.bridge_linf},
                        {"tv_to_target", r.tv_to_target}});
    }
    return {{"p_star_f", result.p_star_f},
            {"epsilon", result.epsilon},
            {"path_gamma", result.path_gamma},
            {"gamma_bound", result.gamma_bound},
            {"successes", result.successes},
            {"runs", result.runs},
            {"success_rate", result.success_rate()},
            {"per_run", std::move(runs)}};
}

}  // namespace smcprog
