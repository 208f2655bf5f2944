#include "smcprog/finite.hpp"

#include <cmath>
#include <numeric>

#include "smcprog/error.hpp"

namespace smcprog {

FiniteSpace::FiniteSpace(std::vector<Program> states, std::vector<double> prior, std::vector<double> rewards)
    : states_(std::move(states)), prior_(std::move(prior)), rewards_(std::move(rewards)) {
    if (states_.empty()) throw Error(ErrorCode::InvalidArgument, "finite space has no states");
    if (prior_.size() != states_.size() || rewards_.size() != states_.size())
        throw Error(ErrorCode::InvalidArgument, "states, prior and rewards must have equal length");
    double total = 0.0;
    for (double p : prior_) {
        if (!(p >= 0.0)) throw Error(ErrorCode::InvalidArgument, "prior entries must be >= 0");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::InvalidArgument, "prior must sum to 1");
    for (double r : rewards_)
        if (!std::isfinite(r)) throw Error(ErrorCode::InvalidArgument, "rewards must be finite");
    for (std::size_t i = 0; i < states_.size(); ++i)
        if (!index_.emplace(states_[i].digest(), i).second)
            throw Error(ErrorCode::InvalidArgument, "duplicate state in finite space");
}

std::optional<std::size_t> FiniteSpace::index_of(const Program& p) const {
    const auto it = index_.find(p.digest());
    if (it == index_.end() || !(states_[it->second] == p)) return std::nullopt;
    return it->second;
}

FiniteSpace bitstring_space(int n_bits) {
    if (n_bits < 1 || n_bits > 12) throw Error(ErrorCode::InvalidArgument, "bitstring space supports 1..12 bits");
    const std::size_t count = std::size_t{1} << n_bits;
    std::vector<Program> states;
    std::vector<double> prior(count, 1.0 / static_cast<double>(count));
    std::vector<double> rewards;
    states.reserve(count);
    rewards.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string s(static_cast<std::size_t>(n_bits), '0');
        int ones = 0;
        for (int b = 0; b < n_bits; ++b) {
            if ((i >> (n_bits - 1 - b)) & 1U) {
                s[static_cast<std::size_t>(b)] = '1';
                ++ones;
            }
        }
        states.emplace_back(std::move(s), "bits");
        rewards.push_back(static_cast<double>(ones) / n_bits);
    }
    return FiniteSpace(std::move(states), std::move(prior), std::move(rewards));
}

Evaluation FiniteSpaceEvaluator::evaluate(const Program& program) const {
    const auto idx = space_.index_of(program);
    if (!idx) return {RewardValue::floor(floor_), "Invalid: outside the finite space"};
    return {RewardValue::ok(space_.rewards()[*idx]), {}};
}

Program FiniteSpacePrior::sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    const auto& p = space_.prior();
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return space_.states()[i];
    }
    for (std::size_t i = p.size(); i-- > 0;)
        if (p[i] > 0.0) return space_.states()[i];
    return space_.states().back();
}

std::optional<double> FiniteSpacePrior::density(const Program& program) const {
    const auto idx = space_.index_of(program);
    return idx ? space_.prior()[*idx] : 0.0;
}

ProposalResult BitFlipKernel::propose(const Program& parent, const MutationContext& context, Rng& rng) const {
    ProposalResult r;
    r.kernel_id = context.kernel_id;
    std::string s = parent.source();
    const auto pos = static_cast<std::size_t>(rng.index(s.size()));
    if (s[pos] != '0' && s[pos] != '1') {
        r.failure = "BitFlip: non-binary program";
        return r;
    }
    s[pos] = s[pos] == '0' ? '1' : '0';
    r.candidate = Program(std::move(s), parent.language_tag());
    r.parse_ok = true;
    return r;
}

std::optional<double> BitFlipKernel::density(const Program& from, const Program& to, const MutationContext&) const {
    const auto& a = from.source();
    const auto& b = to.source();
    if (a.size() != b.size() || a.empty()) return 0.0;
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i];
    return diff == 1 ? 1.0 / static_cast<double>(a.size()) : 0.0;
}

ProposalResult IdentityKernel::propose(const Program& parent, const MutationContext& context, Rng&) const {
    ProposalResult r;
    r.kernel_id = context.kernel_id;
    r.candidate = parent;
    r.parse_ok = true;
    return r;
}

std::optional<double> IdentityKernel::density(const Program& from, const Program& to, const MutationContext&) const {
    return from == to ? 1.0 : 0.0;
}

MatrixKernel::MatrixKernel(const FiniteSpace& space, std::vector<std::vector<double>> rows)
    : space_(space), rows_(std::move(rows)) {
    if (rows_.size() != space_.size()) throw Error(ErrorCode::InvalidArgument, "proposal matrix has wrong row count");
    for (const auto& row : rows_) {
        if (row.size() != space_.size()) throw Error(ErrorCode::InvalidArgument, "proposal matrix is not square");
        const double total = std::accumulate(row.begin(), row.end(), 0.0);
        if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::InvalidArgument, "proposal rows must sum to 1");
    }
}

ProposalResult MatrixKernel::propose(const Program& parent, const MutationContext& context, Rng& rng) const {
    ProposalResult r;
    r.kernel_id = context.kernel_id;
    const auto idx = space_.index_of(parent);
    if (!idx) {
        r.failure = "MatrixKernel: program outside the space";
        return r;
    }
    const auto& row = rows_[*idx];
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = row.size() - 1;
    for (std::size_t j = 0; j < row.size(); ++j) {
        acc += row[j];
        if (u < acc) {
            pick = j;
            break;
        }
    }
    r.candidate = space_.states()[pick];
    r.parse_ok = true;
    return r;
}

std::optional<double> MatrixKernel::density(const Program& from, const Program& to, const MutationContext&) const {
    const auto i = space_.index_of(from);
    const auto j = space_.index_of(to);
    if (!i || !j) return 0.0;
    return rows_[*i][*j];
}

}  // namespace smcprog
