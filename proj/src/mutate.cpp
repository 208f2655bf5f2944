#include "smcprog/mutate.hpp"

#include <algorithm>
#include <cmath>

#include "smcprog/error.hpp"

namespace smcprog {

double acceptance_reward_only(double reward_current, double reward_proposed, double beta_t) {
    if (beta_t < 0.0) throw Error(ErrorCode::InvalidArgument, "beta_t must be >= 0");
    const double log_ratio = beta_t * (reward_proposed - reward_current);
    return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

double acceptance_full_ratio(double p_t_ratio, double forward_density, double reverse_density) {
    if (!(forward_density > 0.0)) throw Error(ErrorCode::InvalidArgument, "forward density must be > 0");
    if (p_t_ratio < 0.0 || reverse_density < 0.0)
        throw Error(ErrorCode::InvalidArgument, "densities must be non-negative");
    return std::min(1.0, p_t_ratio * reverse_density / forward_density);
}

KernelId thompson_select(const KernelStats& stats, Rng& rng, std::span<const KernelId> available) {
    if (available.empty()) throw Error(ErrorCode::InvalidArgument, "no kernels available");
    // Iterate in canonical order so tie-breaking does not depend on the caller's ordering.
    std::optional<KernelId> best;
    double best_draw = -1.0;
    for (KernelId id : kAllKernels) {
        if (std::find(available.begin(), available.end(), id) == available.end()) continue;
        const double draw = rng.beta(stats[id].alpha, stats[id].beta);
        if (draw > best_draw) {
            best_draw = draw;
            best = id;
        }
    }
    return *best;
}

KernelStats thompson_update(KernelStats stats, KernelId kernel, bool success) {
    if (success)
        stats[kernel].alpha += 1.0;
    else
        stats[kernel].beta += 1.0;
    return stats;
}

KernelId select_kernel(const KernelSelection& selection, const KernelStats& stats, Rng& rng) {
    switch (selection.mode) {
        case KernelSelectionMode::Adaptive: return thompson_select(stats, rng, kAllKernels);
        case KernelSelectionMode::Uniform: return kAllKernels[rng.index(kAllKernels.size())];
        case KernelSelectionMode::Fixed: return selection.fixed;
    }
    return selection.fixed;
}

namespace {

double full_ratio_acceptance(const ChainEnvironment& env, const Particle& current, const Program& candidate,
                             double candidate_reward, const MutationContext& ctx) {
    if (env.prior == nullptr || !env.kernel.has_density())
        throw Error(ErrorCode::DensityUnavailable, "full-ratio acceptance needs prior and proposal densities");
    const auto p0_cur = env.prior->density(current.program);
    const auto p0_new = env.prior->density(candidate);
    const auto forward = env.kernel.density(current.program, candidate, ctx);
    const auto reverse = env.kernel.density(candidate, current.program, ctx);
    if (!p0_cur || !p0_new || !forward || !reverse)
        throw Error(ErrorCode::DensityUnavailable, "kernel or prior returned no density");
    if (!(*p0_cur > 0.0)) return 1.0;  // current state outside the prior support
    const double p_t_ratio =
        (*p0_new / *p0_cur) * std::exp(env.beta_t * (candidate_reward - current.reward.value));
    return acceptance_full_ratio(p_t_ratio, *forward, *reverse);
}

}  // namespace

ChainResult mh_chain(const Particle& parent, int k_steps, const ChainEnvironment& env, ChainStreams& streams) {
    if (k_steps < 1) throw Error(ErrorCode::InvalidArgument, "k_steps must be >= 1");

    ChainResult result{parent, {}};
    result.records.reserve(static_cast<std::size_t>(k_steps));
    Particle& z = result.particle;

    for (int k = 0; k < k_steps; ++k) {
        ProposalRecord rec;
        rec.step = k;
        rec.parent_digest = z.program.digest();
        rec.parent_reward = z.reward.value;
        rec.selected = select_kernel(env.selection, env.stats, streams.selection);

        MutationContext ctx;
        if (env.context_builder) {
            ctx = env.context_builder(z, rec.selected);
        } else {
            ctx.iteration = env.iteration;
            ctx.beta_t = env.beta_t;
        }
        ctx.kernel_id = rec.selected;
        ctx.parent_reward = z.reward;
        if (uses_inspiration(rec.selected) && ctx.inspirations.empty()) ctx.kernel_id = no_inspo_twin(rec.selected);
        if (!uses_inspiration(ctx.kernel_id)) ctx.inspirations.clear();
        rec.used = ctx.kernel_id;
        rec.n_inspirations = static_cast<int>(ctx.inspirations.size());

        ProposalResult proposal = env.kernel.propose(z.program, ctx, streams.proposal);
        const double u = streams.accept.uniform();

        rec.llm_call = proposal.llm_call;
        rec.model = std::move(proposal.model);
        rec.system_prompt = std::move(proposal.system_prompt);
        rec.user_prompt = std::move(proposal.user_prompt);
        rec.raw_response = std::move(proposal.raw_response);
        rec.parse_ok = proposal.parse_ok && proposal.candidate.has_value();

        if (!rec.parse_ok) {
            rec.cause = proposal.failure.empty() ? "ParseFailure" : proposal.failure;
        } else {
            rec.candidate = std::move(proposal.candidate);
            const Evaluation eval = env.evaluator.evaluate(*rec.candidate);
            rec.reward = eval.reward;
            rec.cause = eval.cause;
            if (eval.reward.valid) {
                rec.acceptance = env.acceptance == AcceptanceMode::FullRatio
                                     ? full_ratio_acceptance(env, z, *rec.candidate, eval.reward.value, ctx)
                                     : acceptance_reward_only(z.reward.value, eval.reward.value, env.beta_t);
                rec.accepted = u < rec.acceptance;
                rec.success = rec.accepted && eval.reward.value >= z.reward.value;
            }
        }

        if (rec.accepted) {
            z.program = *rec.candidate;
            z.reward = rec.reward;
            z.born_iteration = env.iteration;
            z.migrated = false;
        }
        result.records.push_back(std::move(rec));
    }
    return result;
}

}  // namespace smcprog
