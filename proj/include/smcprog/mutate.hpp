#pragma once

// Forward kernel: proposal kernels, Metropolis-Hastings acceptance, the
// K-step chain, and Thompson-sampled selection over the four proposal modes.

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smcprog/core.hpp"
#include "smcprog/eval.hpp"
#include "smcprog/rng.hpp"

namespace smcprog {

struct Inspiration {
    Program program;
    RewardValue reward;
};

struct MutationContext {
    int iteration = 0;
    double beta_t = 0.0;
    std::vector<Inspiration> inspirations;
    KernelId kernel_id = KernelId::DiffNoInspo;
    std::string task_description;
    /// Reward of the program being mutated, for prompt metrics.
    RewardValue parent_reward;
};

struct ProposalResult {
    std::optional<Program> candidate;  // empty iff parse_ok is false
    KernelId kernel_id = KernelId::DiffNoInspo;
    bool parse_ok = false;
    std::string failure;
    std::string raw_response;
    std::string model;
    std::string system_prompt;
    std::string user_prompt;
    bool llm_call = false;
};

/// Stage-conditional proposal Q_t(. | x, C_t).
class ProposalKernel {
public:
    virtual ~ProposalKernel() = default;

    [[nodiscard]] virtual ProposalResult propose(const Program& parent, const MutationContext& context,
                                                 Rng& rng) const = 0;

    /// Q_t(to | from, C_t) for density-known kernels, nullopt otherwise.
    [[nodiscard]] virtual std::optional<double> density(const Program& /*from*/, const Program& /*to*/,
                                                        const MutationContext& /*context*/) const {
        return std::nullopt;
    }
    [[nodiscard]] virtual bool has_density() const { return false; }
};

/// Initial distribution p0. density() is only needed for full-ratio acceptance.
class PriorSampler {
public:
    virtual ~PriorSampler() = default;
    [[nodiscard]] virtual Program sample(Rng& rng) const = 0;
    [[nodiscard]] virtual std::optional<double> density(const Program& /*program*/) const { return std::nullopt; }
    [[nodiscard]] virtual bool has_density() const { return false; }
};

/// min{1, exp(beta_t (R' - R))}.
[[nodiscard]] double acceptance_reward_only(double reward_current, double reward_proposed, double beta_t);

/// min{1, p_t_ratio * reverse / forward} with
/// p_t_ratio = p0(x') exp(beta_t R') / (p0(x) exp(beta_t R)).
[[nodiscard]] double acceptance_full_ratio(double p_t_ratio, double forward_density, double reverse_density);

struct BetaParams {
    double alpha = 1.0;
    double beta = 1.0;
};

struct KernelStats {
    std::array<BetaParams, 4> params{};

    [[nodiscard]] const BetaParams& operator[](KernelId id) const { return params[static_cast<int>(id)]; }
    [[nodiscard]] BetaParams& operator[](KernelId id) { return params[static_cast<int>(id)]; }
};

/// Draws Beta(alpha, beta) for every available kernel and returns the argmax;
/// ties go to the earlier kernel in kAllKernels order.
[[nodiscard]] KernelId thompson_select(const KernelStats& stats, Rng& rng, std::span<const KernelId> available);

[[nodiscard]] KernelStats thompson_update(KernelStats stats, KernelId kernel, bool success);

/// Kernel choice for one proposal step under the configured mode.
[[nodiscard]] KernelId select_kernel(const KernelSelection& selection, const KernelStats& stats, Rng& rng);

struct ProposalRecord {
    int step = 0;
    KernelId selected = KernelId::DiffNoInspo;
    KernelId used = KernelId::DiffNoInspo;
    std::uint64_t parent_digest = 0;
    double parent_reward = 0.0;
    std::optional<Program> candidate;
    RewardValue reward;
    bool parse_ok = false;
    std::string cause;
    double acceptance = 0.0;
    bool accepted = false;
    bool success = false;
    int n_inspirations = 0;
    bool llm_call = false;
    std::string model;
    std::string system_prompt;
    std::string user_prompt;
    std::string raw_response;
};

/// Builds C_t for a proposal from the current chain state.
using ContextBuilder = std::function<MutationContext(const Particle& current, KernelId kernel)>;

struct ChainEnvironment {
    const ProposalKernel& kernel;
    const Evaluator& evaluator;
    /// Required for AcceptanceMode::FullRatio.
    const PriorSampler* prior = nullptr;
    AcceptanceMode acceptance = AcceptanceMode::RewardOnly;
    KernelSelection selection{};
    double beta_t = 0.0;
    int iteration = 0;
    /// Read-only snapshot taken at chain start.
    KernelStats stats{};
    ContextBuilder context_builder;
};

struct ChainStreams {
    Rng selection;
    Rng proposal;
    Rng accept;
};

struct ChainResult {
    Particle particle;
    std::vector<ProposalRecord> records;
};

/// Runs z <- parent, then K times: select a kernel, propose x', evaluate,
/// accept with the configured probability. Parse and evaluation failures are
/// rejections. Returns the final state and one record per proposal.
[[nodiscard]] ChainResult mh_chain(const Particle& parent, int k_steps, const ChainEnvironment& env,
                                   ChainStreams& streams);

}  // namespace smcprog
