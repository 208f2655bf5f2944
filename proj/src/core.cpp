#include "smcprog/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "smcprog/error.hpp"

namespace smcprog {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptySource: return "EmptySource";
        case ErrorCode::EmptyPopulation: return "EmptyPopulation";
        case ErrorCode::AlreadyTerminated: return "AlreadyTerminated";
        case ErrorCode::NonIncreasingLambda: return "NonIncreasingLambda";
        case ErrorCode::DensityUnavailable: return "DensityUnavailable";
        case ErrorCode::InitFailure: return "InitFailure";
        case ErrorCode::MissingTag: return "MissingTag";
        case ErrorCode::MalformedDiffBlock: return "MalformedDiffBlock";
        case ErrorCode::EmptyCode: return "EmptyCode";
        case ErrorCode::NoMatch: return "NoMatch";
        case ErrorCode::AmbiguousMatch: return "AmbiguousMatch";
        case ErrorCode::NoOpEdit: return "NoOpEdit";
        case ErrorCode::TransportError: return "TransportError";
        case ErrorCode::HttpStatusError: return "HttpStatusError";
        case ErrorCode::BudgetExhausted: return "BudgetExhausted";
        case ErrorCode::MalformedApiResponse: return "MalformedApiResponse";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NonErgodic: return "NonErgodic";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::MissingRun: return "MissingRun";
        case ErrorCode::CorruptLog: return "CorruptLog";
        case ErrorCode::NoCheckpoint: return "NoCheckpoint";
        case ErrorCode::UnknownSuite: return "UnknownSuite";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string digest_hex(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

Program::Program(std::string source, std::string language_tag)
    : source_(std::move(source)), language_(std::move(language_tag)), digest_(0) {
    if (source_.empty()) throw Error(ErrorCode::EmptySource, "program source is empty");
    digest_ = fnv1a64(source_);
}

Program make_program(std::string source, std::string language_tag) {
    return Program(std::move(source), std::move(language_tag));
}

RewardValue RewardValue::ok(double v) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "reward must be finite");
    return {v, true};
}

double effective_beta(const AnnealState& state) noexcept { return state.lambda * state.beta_target; }

std::string_view kernel_name(KernelId id) noexcept {
    switch (id) {
        case KernelId::DiffWithInspo: return "diff_with_inspo";
        case KernelId::DiffNoInspo: return "diff_no_inspo";
        case KernelId::RewriteWithInspo: return "rewrite_with_inspo";
        case KernelId::RewriteNoInspo: return "rewrite_no_inspo";
    }
    return "unknown";
}

std::optional<KernelId> parse_kernel_name(std::string_view name) noexcept {
    for (KernelId id : kAllKernels)
        if (kernel_name(id) == name) return id;
    return std::nullopt;
}

bool uses_inspiration(KernelId id) noexcept {
    return id == KernelId::DiffWithInspo || id == KernelId::RewriteWithInspo;
}

bool is_diff(KernelId id) noexcept {
    return id == KernelId::DiffWithInspo || id == KernelId::DiffNoInspo;
}

KernelId no_inspo_twin(KernelId id) noexcept {
    switch (id) {
        case KernelId::DiffWithInspo: return KernelId::DiffNoInspo;
        case KernelId::RewriteWithInspo: return KernelId::RewriteNoInspo;
        default: return id;
    }
}

void RunConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
    if (n_islands < 1) fail("n_islands must be >= 1");
    if (particles_per_island < 1) fail("particles_per_island must be >= 1");
    if (n_proposals < 1) fail("n_proposals must be >= 1");
    if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta must be a finite value > 0");
    if (!(kappa > 0.0 && kappa < 1.0)) fail("kappa must lie in (0, 1)");
    if (min_iterations < 1) fail("min_iterations must be >= 1");
    if (max_iterations < min_iterations) fail("max_iterations must be >= min_iterations");
    if (migration_interval < 1) fail("migration_interval must be >= 1");
    if (migration_size < 0 || migration_size > particles_per_island)
        fail("migration_size must lie in [0, particles_per_island]");
    if (top_k_inspiration < 0) fail("top_k_inspiration must be >= 0");
    if (diverse_inspirations < 0) fail("diverse_inspirations must be >= 0");
    if (!std::isfinite(reward_floor)) fail("reward_floor must be finite");
    if (!(lambda_tolerance > 0.0 && lambda_tolerance < 1.0)) fail("lambda_tolerance must lie in (0, 1)");
    if (max_concurrent_chains < 1) fail("max_concurrent_chains must be >= 1");
}

RewardBounds RewardBounds::of(std::span<const double> rewards) {
    if (rewards.empty()) throw Error(ErrorCode::EmptyPopulation, "no rewards");
    auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
    return {*lo, *hi, *hi - *lo};
}

}  // namespace smcprog
