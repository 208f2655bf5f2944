#pragma once

// The SMC loop. One island is an independent sampler:
//
//   init:   N particles from p0, evaluated; lambda_0 = 0
//   repeat: lambda_t    <- ESS bisection on the current rewards
//           ancestors   <- systematic resampling with log w = delta_beta * R
//           particle_n  <- K-step MH chain targeting p_t from ancestor n
//           archive     <- every proposal of this iteration
//   until   lambda_t = 1
//
// The engine advances all islands one iteration per epoch and migrates every
// migration_interval epochs.

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "smcprog/archive.hpp"
#include "smcprog/core.hpp"
#include "smcprog/eval.hpp"
#include "smcprog/mutate.hpp"
#include "smcprog/resample.hpp"
#include "smcprog/runlog.hpp"

namespace smcprog {

struct IslandState {
    int island_id = 0;
    std::vector<Particle> particles;
    AnnealState anneal;
    KernelStats kernel_stats;
    Archive archive;
    /// lambda after each completed iteration.
    std::vector<double> lambda_history;
};

struct EngineComponents {
    const ProposalKernel* kernel = nullptr;
    const Evaluator* evaluator = nullptr;
    const PriorSampler* prior = nullptr;
    std::shared_ptr<const EmbeddingProvider> embedder;
};

struct IterationReport {
    int island_id = 0;
    int iteration = 0;  // t, 1-based
    double lambda_prev = 0.0;
    double lambda = 0.0;
    double delta_beta = 0.0;
    double ess = 0.0;
    bool forced = false;  // lambda = 1 imposed by max_iterations
    std::vector<double> rewards;  // pre-resample
    WeightVector weights;
    double offset = 0.0;
    std::vector<std::size_t> ancestors;
    std::vector<ChainResult> chains;
};

using IterationObserver = std::function<void(const IslandState&, const IterationReport&)>;

/// Draws and evaluates N particles. Throws Error(InitFailure) when every
/// evaluation fails. Appends init_particle events when events is non-null.
[[nodiscard]] IslandState init_island(const RunConfig& config, const EngineComponents& components, int island_id,
                                      EventBatch* events);

/// One SMC iteration; see the file comment. Throws Error(AlreadyTerminated).
IterationReport run_iteration(IslandState& island, const RunConfig& config, const EngineComponents& components,
                              EventBatch* events);

struct MigrationSend {
    int from = 0;
    int to = 0;
    std::vector<Particle> migrants;
};

/// Every island sends copies of its top-m particles (reward descending, ties
/// to older birth) to one uniformly chosen other island, then keeps the top N
/// of residents plus arrivals. Needs at least two islands; otherwise no-op.
std::vector<MigrationSend> migrate(std::vector<IslandState>& islands, int m, Rng& rng);

/// Stable ordering used by migration: reward descending, then born_iteration ascending.
[[nodiscard]] std::vector<std::size_t> rank_particles(const std::vector<Particle>& particles);

[[nodiscard]] nlohmann::json particle_to_json(const Particle& p);
[[nodiscard]] Particle particle_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json kernel_stats_to_json(const KernelStats& s);
[[nodiscard]] KernelStats kernel_stats_from_json(const nlohmann::json& j);

class Engine {
public:
    /// log may be null (no events are built then).
    Engine(RunConfig config, EngineComponents components, RunLogWriter* log = nullptr);

    void initialize();
    /// Runs one epoch. Returns false once every island has terminated.
    bool step_epoch();
    /// initialize() if needed, epochs until termination, then run_end.
    void run();

    /// Continue from a checkpoint instead of initialize().
    void restore(std::vector<IslandState> islands, int epoch);

    void set_observer(IterationObserver observer) { observer_ = std::move(observer); }
    /// Stops run() after the given epoch without writing run_end.
    void set_stop_after_epoch(std::optional<int> epoch) { stop_after_epoch_ = epoch; }

    [[nodiscard]] const std::vector<IslandState>& islands() const noexcept { return islands_; }
    [[nodiscard]] int epoch() const noexcept { return epoch_; }
    [[nodiscard]] bool finished() const;
    [[nodiscard]] const RunConfig& config() const noexcept { return config_; }

private:
    RunConfig config_;
    EngineComponents components_;
    RunLogWriter* log_;
    std::vector<IslandState> islands_;
    int epoch_ = 0;
    bool initialized_ = false;
    IterationObserver observer_;
    std::optional<int> stop_after_epoch_;
};

/// Runs body(i) for i in [0, n) on up to `workers` threads. The first
/// exception by index order is rethrown after all workers finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body);

}  // namespace smcprog
