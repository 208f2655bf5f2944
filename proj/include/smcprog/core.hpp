#pragma once

// Domain types shared by every module.
//
// Symbol map:
//   Program      x in the countable program space
//   RewardValue  R(x), bounded; failed evaluations carry the reward floor
//   AnnealState  lambda_t in [0,1] and the target inverse temperature beta;
//                the bridge p_t(x) is proportional to p0(x) exp(lambda_t beta R(x))
//   RewardBounds R-, R+ and the oscillation Delta_R = R+ - R-

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace smcprog {

/// 64-bit FNV-1a over raw bytes. Platform and process independent.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Lower-case, zero-padded 16 hex digit rendering of a digest.
std::string digest_hex(std::uint64_t digest);

class Program {
public:
    /// Throws Error(EmptySource) on empty source.
    Program(std::string source, std::string language_tag);

    [[nodiscard]] const std::string& source() const noexcept { return source_; }
    [[nodiscard]] const std::string& language_tag() const noexcept { return language_; }
    [[nodiscard]] std::uint64_t digest() const noexcept { return digest_; }
    [[nodiscard]] std::string digest_hex() const { return smcprog::digest_hex(digest_); }

    friend bool operator==(const Program& a, const Program& b) noexcept {
        return a.digest_ == b.digest_ && a.source_ == b.source_;
    }

private:
    std::string source_;
    std::string language_;
    std::uint64_t digest_;
};

Program make_program(std::string source, std::string language_tag);

struct RewardValue {
    double value = 0.0;
    bool valid = false;

    static RewardValue ok(double v);
    static RewardValue floor(double reward_floor) { return {reward_floor, false}; }
};

struct Particle {
    Program program;
    RewardValue reward;
    int born_iteration = 0;
    int island_id = 0;
    std::string lineage_id;
    bool migrated = false;  // arrived by migration since the last iteration
};

struct AnnealState {
    double lambda = 0.0;
    double beta_target = 20.0;
    int iteration = 0;
    bool terminated = false;
};

[[nodiscard]] double effective_beta(const AnnealState& state) noexcept;

enum class KernelId : int {
    DiffWithInspo = 0,
    DiffNoInspo = 1,
    RewriteWithInspo = 2,
    RewriteNoInspo = 3,
};

inline constexpr std::array<KernelId, 4> kAllKernels = {
    KernelId::DiffWithInspo, KernelId::DiffNoInspo, KernelId::RewriteWithInspo,
    KernelId::RewriteNoInspo};

std::string_view kernel_name(KernelId id) noexcept;
std::optional<KernelId> parse_kernel_name(std::string_view name) noexcept;
bool uses_inspiration(KernelId id) noexcept;
bool is_diff(KernelId id) noexcept;
/// with_inspo kernels map to their no_inspo twin; others map to themselves.
KernelId no_inspo_twin(KernelId id) noexcept;

enum class KernelSelectionMode { Adaptive, Uniform, Fixed };
enum class AcceptanceMode { RewardOnly, FullRatio };

struct KernelSelection {
    KernelSelectionMode mode = KernelSelectionMode::Adaptive;
    KernelId fixed = KernelId::DiffNoInspo;
};

/// Engine hyperparameters. Defaults are the published reference settings.
struct RunConfig {
    int n_islands = 2;
    int particles_per_island = 8;
    int n_proposals = 2;
    double beta = 20.0;
    double kappa = 0.9;
    int min_iterations = 3;
    int max_iterations = 15;
    int migration_interval = 3;
    int migration_size = 1;
    int top_k_inspiration = 2;
    int diverse_inspirations = 2;
    double reward_floor = 0.0;
    std::uint64_t seed = 0;
    KernelSelection kernel_selection{};
    AcceptanceMode acceptance_mode = AcceptanceMode::RewardOnly;
    double lambda_tolerance = 1e-6;
    int max_concurrent_chains = 1;
    bool parallel_islands = false;
    std::string task_description;

    /// Throws Error(InvalidConfig) naming the first violated bound.
    void validate() const;
};

struct RewardBounds {
    double r_minus = 0.0;
    double r_plus = 0.0;
    double delta_r = 0.0;

    static RewardBounds of(std::span<const double> rewards);
};

}  // namespace smcprog
