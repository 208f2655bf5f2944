#pragma once

// Enumerable program spaces and density-known proposal kernels over them.
// These back the brute-force oracle and the desk-scale engine runs.

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "smcprog/core.hpp"
#include "smcprog/eval.hpp"
#include "smcprog/mutate.hpp"

namespace smcprog {

class FiniteSpace {
public:
    /// Throws Error(InvalidArgument) unless sizes match, the prior sums to 1
    /// within 1e-12 and every reward is finite.
    FiniteSpace(std::vector<Program> states, std::vector<double> prior, std::vector<double> rewards);

    [[nodiscard]] std::size_t size() const noexcept { return states_.size(); }
    [[nodiscard]] const std::vector<Program>& states() const noexcept { return states_; }
    [[nodiscard]] const std::vector<double>& prior() const noexcept { return prior_; }
    [[nodiscard]] const std::vector<double>& rewards() const noexcept { return rewards_; }
    [[nodiscard]] std::optional<std::size_t> index_of(const Program& p) const;
    [[nodiscard]] RewardBounds bounds() const { return RewardBounds::of(rewards_); }

private:
    std::vector<Program> states_;
    std::vector<double> prior_;
    std::vector<double> rewards_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// {0,1}^n as strings, uniform prior, R = popcount / n. State i spells i in
/// binary, most significant bit first.
[[nodiscard]] FiniteSpace bitstring_space(int n_bits);

/// Reward lookup on a finite space; programs outside it get the floor.
class FiniteSpaceEvaluator final : public Evaluator {
public:
    explicit FiniteSpaceEvaluator(const FiniteSpace& space, double reward_floor = 0.0)
        : space_(space), floor_(reward_floor) {}
    [[nodiscard]] Evaluation evaluate(const Program& program) const override;

private:
    const FiniteSpace& space_;
    double floor_;
};

/// Samples p0 of a finite space and reports its density.
class FiniteSpacePrior final : public PriorSampler {
public:
    explicit FiniteSpacePrior(const FiniteSpace& space) : space_(space) {}
    [[nodiscard]] Program sample(Rng& rng) const override;
    [[nodiscard]] std::optional<double> density(const Program& program) const override;
    [[nodiscard]] bool has_density() const override { return true; }

private:
    const FiniteSpace& space_;
};

/// Degenerate prior: every particle starts from the same seed program.
class SeedProgramPrior final : public PriorSampler {
public:
    explicit SeedProgramPrior(Program seed) : seed_(std::move(seed)) {}
    [[nodiscard]] Program sample(Rng&) const override { return seed_; }

private:
    Program seed_;
};

/// Flip one uniformly chosen bit of a {0,1} string. Symmetric:
/// Q(y|x) = 1/n when x and y differ in exactly one position.
class BitFlipKernel final : public ProposalKernel {
public:
    [[nodiscard]] ProposalResult propose(const Program& parent, const MutationContext& context,
                                         Rng& rng) const override;
    [[nodiscard]] std::optional<double> density(const Program& from, const Program& to,
                                                const MutationContext& context) const override;
    [[nodiscard]] bool has_density() const override { return true; }
};

/// Always proposes the current program.
class IdentityKernel final : public ProposalKernel {
public:
    [[nodiscard]] ProposalResult propose(const Program& parent, const MutationContext& context,
                                         Rng& rng) const override;
    [[nodiscard]] std::optional<double> density(const Program& from, const Program& to,
                                                const MutationContext& context) const override;
    [[nodiscard]] bool has_density() const override { return true; }
};

/// Proposal given by an explicit row-stochastic matrix over a finite space.
class MatrixKernel final : public ProposalKernel {
public:
    MatrixKernel(const FiniteSpace& space, std::vector<std::vector<double>> rows);
    [[nodiscard]] ProposalResult propose(const Program& parent, const MutationContext& context,
                                         Rng& rng) const override;
    [[nodiscard]] std::optional<double> density(const Program& from, const Program& to,
                                                const MutationContext& context) const override;
    [[nodiscard]] bool has_density() const override { return true; }

private:
    const FiniteSpace& space_;
    std::vector<std::vector<double>> rows_;
};

}  // namespace smcprog
