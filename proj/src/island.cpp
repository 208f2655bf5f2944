#include "smcprog/island.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "smcprog/error.hpp"
#include "smcprog/schedule.hpp"

namespace smcprog {

using nlohmann::json;

namespace {

constexpr int kEssCurvePoints = 11;

json record_to_json(const ProposalRecord& r, int island, int t, std::size_t chain, std::size_t ancestor,
                    double weight) {
    json j = {
        {"island", island},
        {"t", t},
        {"chain", chain},
        {"step", r.step},
        {"ancestor", ancestor},
        {"ancestor_weight", weight},
        {"selected", kernel_name(r.selected)},
        {"used", kernel_name(r.used)},
        {"parent_digest", digest_hex(r.parent_digest)},
        {"parent_reward", r.parent_reward},
        {"parse_ok", r.parse_ok},
        {"reward", r.reward.value},
        {"valid", r.reward.valid},
        {"cause", r.cause},
        {"acceptance", r.acceptance},
        {"accepted", r.accepted},
        {"success", r.success},
        {"n_inspirations", r.n_inspirations},
        {"llm_call", r.llm_call},
        {"model", r.model},
    };
    if (r.candidate) {
        j["candidate_digest"] = r.candidate->digest_hex();
        j["candidate_source"] = r.candidate->source();
        j["candidate_language"] = r.candidate->language_tag();
    } else {
        j["candidate_digest"] = nullptr;
        j["candidate_source"] = nullptr;
        j["candidate_language"] = nullptr;
    }
    return j;
}

std::vector<double> rewards_of(const std::vector<Particle>& particles) {
    std::vector<double> r;
    r.reserve(particles.size());
    for (const auto& p : particles) r.push_back(p.reward.value);
    return r;
}

}  // namespace

json particle_to_json(const Particle& p) {
    return {
        {"source", p.program.source()},
        {"language", p.program.language_tag()},
        {"digest", p.program.digest_hex()},
        {"reward", p.reward.value},
        {"valid", p.reward.valid},
        {"born", p.born_iteration},
        {"island", p.island_id},
        {"lineage", p.lineage_id},
        {"migrated", p.migrated},
    };
}

Particle particle_from_json(const json& j) {
    Particle p{Program(j.at("source").get<std::string>(), j.at("language").get<std::string>()),
               RewardValue{j.at("reward").get<double>(), j.at("valid").get<bool>()},
               j.at("born").get<int>(),
               j.at("island").get<int>(),
               j.at("lineage").get<std::string>(),
               j.at("migrated").get<bool>()};
    return p;
}

json kernel_stats_to_json(const KernelStats& s) {
    json out = json::object();
    for (KernelId id : kAllKernels) out[std::string(kernel_name(id))] = {s[id].alpha, s[id].beta};
    return out;
}

KernelStats kernel_stats_from_json(const json& j) {
    KernelStats s;
    for (KernelId id : kAllKernels) {
        const auto& ab = j.at(std::string(kernel_name(id)));
        s[id] = {ab.at(0).get<double>(), ab.at(1).get<double>()};
    }
    return s;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    if (workers <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    {
        std::vector<std::jthread> pool;
        pool.reserve(n_threads);
        for (std::size_t w = 0; w < n_threads; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

IslandState init_island(const RunConfig& config, const EngineComponents& components, int island_id,
                        EventBatch* events) {
    IslandState island{island_id, {}, {}, {}, Archive(components.embedder), {}};
    island.anneal.beta_target = config.beta;
    const auto n = static_cast<std::size_t>(config.particles_per_island);
    island.particles.reserve(n);

    bool any_valid = false;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = make_stream(config.seed, StreamPurpose::Init, static_cast<std::uint64_t>(island_id), i);
        Program program = components.prior->sample(rng);
        Evaluation eval = components.evaluator->evaluate(program);
        any_valid = any_valid || eval.reward.valid;
        Particle p{program, eval.reward, 0, island_id, program.digest_hex(), false};
        island.archive.record({program, eval.reward, 0, "init", true, island_id});
        if (events) {
            json payload = particle_to_json(p);
            payload["index"] = i;
            payload["cause"] = eval.cause;
            payload["llm_call"] = false;
            events->push_back({"init_particle", std::move(payload), std::nullopt});
        }
        island.particles.push_back(std::move(p));
    }
    if (!any_valid)
        throw Error(ErrorCode::InitFailure,
                    "all " + std::to_string(n) + " initial evaluations on island " + std::to_string(island_id) +
                        " failed");
    return island;
}

IterationReport run_iteration(IslandState& island, const RunConfig& config, const EngineComponents& components,
                              EventBatch* events) {
    if (island.anneal.terminated)
        throw Error(ErrorCode::AlreadyTerminated, "island " + std::to_string(island.island_id) + " has terminated");

    const auto island_u = static_cast<std::uint64_t>(island.island_id);
    IterationReport rep;
    rep.island_id = island.island_id;
    rep.iteration = island.anneal.iteration + 1;
    rep.lambda_prev = island.anneal.lambda;
    rep.rewards = rewards_of(island.particles);
    const int t = rep.iteration;

    // (i) temperature
    const ScheduleOptions sched{config.kappa, config.min_iterations, config.lambda_tolerance, 60};
    if (t >= config.max_iterations) {
        rep.lambda = 1.0;
        rep.forced = true;
    } else {
        rep.lambda = next_lambda(rep.rewards, island.anneal, sched);
    }
    rep.delta_beta = (rep.lambda - rep.lambda_prev) * config.beta;
    rep.ess = ess(rep.rewards, rep.lambda_prev, rep.lambda, config.beta);

    // (ii) reweight and resample
    rep.weights = compute_weights(rep.rewards, rep.delta_beta);
    Rng resample_rng = make_stream(config.seed, StreamPurpose::Resample, island_u, static_cast<std::uint64_t>(t));
    const double n = static_cast<double>(rep.rewards.size());
    rep.offset = std::min(resample_rng.uniform() / n, std::nextafter(1.0 / n, 0.0));
    rep.ancestors = systematic_resample_with_offset(rep.weights, rep.offset);

    if (events) {
        const double cap = std::min(1.0, rep.lambda_prev + 1.0 / config.min_iterations);
        json curve = json::array();
        for (int i = 0; i < kEssCurvePoints; ++i) {
            const double lam = rep.lambda_prev + (cap - rep.lambda_prev) * i / (kEssCurvePoints - 1);
            curve.push_back({lam, ess(rep.rewards, rep.lambda_prev, lam, config.beta)});
        }
        events->push_back({"iteration_start",
                           {{"island", island.island_id},
                            {"t", t},
                            {"lambda_prev", rep.lambda_prev},
                            {"lambda", rep.lambda},
                            {"delta_beta", rep.delta_beta},
                            {"beta_t", rep.lambda * config.beta},
                            {"ess", rep.ess},
                            {"ess_fraction", rep.ess / n},
                            {"forced", rep.forced},
                            {"ess_curve", std::move(curve)}},
                           std::nullopt});
        json digests = json::array();
        for (const auto& p : island.particles) digests.push_back(p.program.digest_hex());
        events->push_back({"weights",
                           {{"island", island.island_id},
                            {"t", t},
                            {"rewards", rep.rewards},
                            {"digests", std::move(digests)},
                            {"log_weights", rep.weights.log_weights},
                            {"normalized", rep.weights.normalized}},
                           std::nullopt});
        events->push_back({"resample",
                           {{"island", island.island_id}, {"t", t}, {"offset", rep.offset}, {"ancestors", rep.ancestors}},
                           std::nullopt});
    }

    // (iii) K-step MH chains against a snapshot of stats and archive
    const double beta_t = rep.lambda * config.beta;
    const KernelStats stats_snapshot = island.kernel_stats;
    const Archive& archive = island.archive;
    const int top_k = config.top_k_inspiration;
    const int diverse = config.diverse_inspirations;
    const std::string& task = config.task_description;

    ChainEnvironment env{*components.kernel, *components.evaluator, components.prior, config.acceptance_mode,
                         config.kernel_selection, beta_t, t, stats_snapshot, {}};
    env.context_builder = [&](const Particle& current, KernelId kernel) {
        MutationContext ctx;
        ctx.iteration = t;
        ctx.beta_t = beta_t;
        ctx.kernel_id = kernel;
        ctx.task_description = task;
        if (uses_inspiration(kernel)) ctx.inspirations = archive.select_inspirations(current.program, top_k, diverse);
        return ctx;
    };

    rep.chains.resize(rep.ancestors.size(), ChainResult{island.particles.front(), {}});
    parallel_for(rep.ancestors.size(), config.max_concurrent_chains, [&](std::size_t i) {
        Particle start = island.particles[rep.ancestors[i]];
        start.lineage_id = start.program.digest_hex();
        start.island_id = island.island_id;
        ChainStreams streams{make_stream(config.seed, StreamPurpose::Thompson, island_u, t, i),
                             make_stream(config.seed, StreamPurpose::Proposal, island_u, t, i),
                             make_stream(config.seed, StreamPurpose::Accept, island_u, t, i)};
        rep.chains[i] = mh_chain(start, config.n_proposals, env, streams);
    });

    // (iv) archive and kernel statistics, in chain order
    std::vector<Particle> next;
    next.reserve(rep.chains.size());
    int accepted = 0;
    int proposals = 0;
    for (std::size_t i = 0; i < rep.chains.size(); ++i) {
        auto& chain = rep.chains[i];
        for (const auto& rec : chain.records) {
            ++proposals;
            accepted += rec.accepted;
            island.kernel_stats = thompson_update(island.kernel_stats, rec.used, rec.success);
            if (rec.candidate)
                island.archive.record(
                    {*rec.candidate, rec.reward, t, std::string(kernel_name(rec.used)), rec.accepted, island.island_id});
            if (events) {
                std::optional<json> transcript;
                if (rec.llm_call)
                    transcript = json{{"island", island.island_id}, {"t", t}, {"chain", i}, {"step", rec.step},
                                      {"kernel", kernel_name(rec.used)}, {"model", rec.model},
                                      {"system", rec.system_prompt}, {"user", rec.user_prompt},
                                      {"response", rec.raw_response}};
                events->push_back({"proposal",
                                   record_to_json(rec, island.island_id, t, i, rep.ancestors[i],
                                                  rep.weights.normalized[rep.ancestors[i]]),
                                   std::move(transcript)});
            }
        }
        next.push_back(chain.particle);
    }
    island.particles = std::move(next);

    // (v) advance
    island.anneal = advance(island.anneal, rep.lambda);
    island.lambda_history.push_back(rep.lambda);

    if (events) {
        const auto r = rewards_of(island.particles);
        json particles = json::array();
        for (const auto& p : island.particles) particles.push_back(particle_to_json(p));
        events->push_back({"iteration_end",
                           {{"island", island.island_id},
                            {"t", t},
                            {"lambda", island.anneal.lambda},
                            {"terminated", island.anneal.terminated},
                            {"kernel_stats", kernel_stats_to_json(island.kernel_stats)},
                            {"particles", std::move(particles)},
                            {"best_reward", *std::max_element(r.begin(), r.end())},
                            {"mean_reward", std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size())},
                            {"proposals", proposals},
                            {"accepted", accepted}},
                           std::nullopt});
    }
    return rep;
}

std::vector<std::size_t> rank_particles(const std::vector<Particle>& particles) {
    std::vector<std::size_t> idx(particles.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto& pa = particles[a];
        const auto& pb = particles[b];
        if (pa.reward.value != pb.reward.value) return pa.reward.value > pb.reward.value;
        return pa.born_iteration < pb.born_iteration;
    });
    return idx;
}

std::vector<MigrationSend> migrate(std::vector<IslandState>& islands, int m, Rng& rng) {
    std::vector<MigrationSend> sends;
    const std::size_t n_islands = islands.size();
    if (n_islands < 2 || m <= 0) return sends;

    for (std::size_t i = 0; i < n_islands; ++i) {
        auto target = static_cast<std::size_t>(rng.index(n_islands - 1));
        if (target >= i) ++target;
        MigrationSend s{islands[i].island_id, islands[target].island_id, {}};
        const auto order = rank_particles(islands[i].particles);
        const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(m), order.size());
        for (std::size_t k = 0; k < count; ++k) {
            Particle copy = islands[i].particles[order[k]];
            copy.migrated = true;
            copy.island_id = islands[target].island_id;
            s.migrants.push_back(std::move(copy));
        }
        sends.push_back(std::move(s));
    }

    for (auto& island : islands) {
        const std::size_t keep = island.particles.size();
        std::vector<Particle> merged = island.particles;
        for (const auto& s : sends)
            if (s.to == island.island_id) merged.insert(merged.end(), s.migrants.begin(), s.migrants.end());
        const auto order = rank_particles(merged);
        std::vector<Particle> kept;
        kept.reserve(keep);
        for (std::size_t k = 0; k < keep; ++k) kept.push_back(merged[order[k]]);
        island.particles = std::move(kept);
    }
    return sends;
}

Engine::Engine(RunConfig config, EngineComponents components, RunLogWriter* log)
    : config_(std::move(config)), components_(std::move(components)), log_(log) {
    config_.validate();
    if (!components_.kernel || !components_.evaluator || !components_.prior)
        throw Error(ErrorCode::InvalidArgument, "engine needs a kernel, an evaluator and a prior");
    if (config_.acceptance_mode == AcceptanceMode::FullRatio &&
        (!components_.kernel->has_density() || !components_.prior->has_density()))
        throw Error(ErrorCode::DensityUnavailable, "full-ratio acceptance needs density-known prior and kernel");
}

bool Engine::finished() const {
    return initialized_ &&
           std::all_of(islands_.begin(), islands_.end(), [](const IslandState& s) { return s.anneal.terminated; });
}

void Engine::initialize() {
    islands_.clear();
    EventBatch batch;
    EventBatch* events = log_ ? &batch : nullptr;
    if (events) {
        events->push_back({"run_start",
                           {{"seed", config_.seed},
                            {"n_islands", config_.n_islands},
                            {"particles_per_island", config_.particles_per_island},
                            {"n_proposals", config_.n_proposals},
                            {"beta", config_.beta},
                            {"kappa", config_.kappa},
                            {"min_iterations", config_.min_iterations},
                            {"max_iterations", config_.max_iterations},
                            {"migration_interval", config_.migration_interval},
                            {"migration_size", config_.migration_size},
                            {"epoch", 0}},
                           std::nullopt});
    }
    std::vector<EventBatch> per_island(static_cast<std::size_t>(config_.n_islands));
    islands_.resize(static_cast<std::size_t>(config_.n_islands));
    parallel_for(islands_.size(), config_.parallel_islands ? config_.n_islands : 1, [&](std::size_t i) {
        islands_[i] = init_island(config_, components_, static_cast<int>(i), events ? &per_island[i] : nullptr);
    });
    if (events) {
        for (auto& b : per_island)
            for (auto& e : b) {
                e.payload["epoch"] = 0;
                events->push_back(std::move(e));
            }
        log_->write_batch(std::move(batch));
    }
    epoch_ = 0;
    initialized_ = true;
}

void Engine::restore(std::vector<IslandState> islands, int epoch) {
    if (islands.size() != static_cast<std::size_t>(config_.n_islands))
        throw Error(ErrorCode::InvalidArgument, "restored island count does not match the config");
    islands_ = std::move(islands);
    epoch_ = epoch;
    initialized_ = true;
}

bool Engine::step_epoch() {
    if (!initialized_) initialize();
    if (finished()) return false;
    ++epoch_;

    std::vector<EventBatch> per_island(islands_.size());
    std::vector<std::optional<IterationReport>> reports(islands_.size());
    parallel_for(islands_.size(), config_.parallel_islands ? config_.n_islands : 1, [&](std::size_t i) {
        if (islands_[i].anneal.terminated) return;
        reports[i] = run_iteration(islands_[i], config_, components_, log_ ? &per_island[i] : nullptr);
    });

    EventBatch batch;
    for (auto& b : per_island)
        for (auto& e : b) {
            e.payload["epoch"] = epoch_;
            batch.push_back(std::move(e));
        }

    if (observer_)
        for (std::size_t i = 0; i < islands_.size(); ++i)
            if (reports[i]) observer_(islands_[i], *reports[i]);

    const bool all_done =
        std::all_of(islands_.begin(), islands_.end(), [](const IslandState& s) { return s.anneal.terminated; });
    if (config_.n_islands >= 2 && config_.migration_size > 0 && epoch_ % config_.migration_interval == 0 &&
        !all_done) {
        Rng rng = make_stream(config_.seed, StreamPurpose::Migration, 0, static_cast<std::uint64_t>(epoch_));
        const auto sends = migrate(islands_, config_.migration_size, rng);
        if (log_) {
            json js = json::array();
            for (const auto& s : sends) {
                json digests = json::array();
                for (const auto& p : s.migrants) digests.push_back(p.program.digest_hex());
                js.push_back({{"from", s.from}, {"to", s.to}, {"digests", std::move(digests)}});
            }
            json pops = json::array();
            for (const auto& island : islands_) {
                json ps = json::array();
                for (const auto& p : island.particles) ps.push_back(particle_to_json(p));
                pops.push_back({{"island", island.island_id}, {"particles", std::move(ps)}});
            }
            batch.push_back({"migration", {{"epoch", epoch_}, {"sends", std::move(js)}, {"populations", std::move(pops)}},
                             std::nullopt});
        }
    }

    if (log_) log_->write_batch(std::move(batch));
    return !finished();
}

void Engine::run() {
    if (!initialized_) initialize();
    while (!finished()) {
        if (stop_after_epoch_ && epoch_ >= *stop_after_epoch_) return;
        step_epoch();
    }
    if (log_) {
        json lambdas = json::array();
        for (const auto& island : islands_)
            lambdas.push_back({{"island", island.island_id}, {"iterations", island.anneal.iteration},
                               {"lambda", island.anneal.lambda}});
        log_->write_batch({{"run_end", {{"status", "terminated"}, {"epoch", epoch_}, {"islands", std::move(lambdas)}},
                            std::nullopt}});
    }
}

}  // namespace smcprog
