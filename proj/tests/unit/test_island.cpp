#include <atomic>
#include <map>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "smcprog/error.hpp"
#include "smcprog/finite.hpp"
#include "smcprog/island.hpp"

using namespace smcprog;

namespace {

struct BitsFixture {
    FiniteSpace space = bitstring_space(6);
    BitFlipKernel kernel;
    FiniteSpaceEvaluator evaluator{space};
    FiniteSpacePrior prior{space};

    EngineComponents components() const { return {&kernel, &evaluator, &prior, nullptr}; }
};

RunConfig small_config() {
    RunConfig c;
    c.n_islands = 3;
    c.particles_per_island = 12;
    c.n_proposals = 3;
    c.beta = 8.0;
    c.kappa = 0.6;
    c.min_iterations = 3;
    c.max_iterations = 8;
    c.migration_interval = 2;
    c.migration_size = 2;
    c.kernel_selection = {KernelSelectionMode::Adaptive, KernelId::DiffNoInspo};
    c.seed = 99;
    return c;
}

class FailingEvaluator final : public Evaluator {
public:
    [[nodiscard]] Evaluation evaluate(const Program&) const override {
        return {RewardValue::floor(0.0), "Timeout: scripted"};
    }
};

Particle make(const std::string& src, double reward, int born, int island = 0) {
    return Particle{Program(src, "bits"), RewardValue::ok(reward), born, island, src, false};
}

std::string run_log_bytes(const RunConfig& cfg, const EngineComponents& comp) {
    testutil::TempDir dir;
    {
        RunLogWriter log(dir.path());
        Engine engine(cfg, comp, &log);
        engine.run();
    }
    return testutil::read_file(dir / kEventsFile);
}

}  // namespace

TEST_SUITE("island") {
    TEST_CASE("initialization draws and evaluates N particles") {
        const BitsFixture f;
        EventBatch events;
        const auto island = init_island(small_config(), f.components(), 1, &events);
        CHECK(island.particles.size() == 12);
        CHECK(island.archive.size() == 12);
        CHECK(island.anneal.lambda == 0.0);
        CHECK(island.anneal.beta_target == 8.0);
        REQUIRE(events.size() == 12);
        for (std::size_t i = 0; i < events.size(); ++i) {
            CHECK(events[i].kind == "init_particle");
            CHECK(events[i].payload["index"] == i);
            CHECK(events[i].payload["island"] == 1);
            CHECK(events[i].payload["llm_call"] == false);
        }
        for (const auto& p : island.particles) CHECK(p.reward.valid);
    }

    TEST_CASE("initialization fails only when every evaluation fails") {
        const BitsFixture f;
        const FailingEvaluator bad;
        try {
            (void)init_island(small_config(), {&f.kernel, &bad, &f.prior, nullptr}, 0, nullptr);
            FAIL("expected InitFailure");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InitFailure);
        }
    }

    TEST_CASE("one iteration: events, bookkeeping and deferred statistics") {
        const BitsFixture f;
        const RunConfig cfg = small_config();
        auto island = init_island(cfg, f.components(), 0, nullptr);
        const KernelStats before = island.kernel_stats;
        EventBatch events;
        const auto rep = run_iteration(island, cfg, f.components(), &events);

        REQUIRE(events.size() == 3 + 12 * 3 + 1);
        CHECK(events[0].kind == "iteration_start");
        CHECK(events[1].kind == "weights");
        CHECK(events[2].kind == "resample");
        for (std::size_t i = 3; i < 3 + 36; ++i) CHECK(events[i].kind == "proposal");
        CHECK(events.back().kind == "iteration_end");
        CHECK(events[0].payload["ess_curve"].size() == 11);

        CHECK(rep.iteration == 1);
        CHECK(rep.lambda > 0.0);
        CHECK(rep.ess >= cfg.kappa * 12 * (1 - 1e-12));
        CHECK(rep.offset >= 0.0);
        CHECK(rep.offset < 1.0 / 12);
        CHECK(std::is_sorted(rep.ancestors.begin(), rep.ancestors.end()));
        CHECK(island.anneal.iteration == 1);
        CHECK(island.lambda_history == std::vector<double>{rep.lambda});
        CHECK(island.archive.size() == 12 + 36);

        // Stats after the iteration = snapshot + one update per record on the used kernel.
        KernelStats expect = before;
        for (const auto& chain : rep.chains)
            for (const auto& r : chain.records) expect = thompson_update(expect, r.used, r.success);
        for (KernelId id : kAllKernels) {
            CHECK(island.kernel_stats[id].alpha == expect[id].alpha);
            CHECK(island.kernel_stats[id].beta == expect[id].beta);
        }
        double total = 0.0;
        for (KernelId id : kAllKernels) total += island.kernel_stats[id].alpha + island.kernel_stats[id].beta - 2.0;
        CHECK(total == 36.0);
    }

    TEST_CASE("islands run to lambda = 1 within max_iterations") {
        const BitsFixture f;
        RunConfig cfg = small_config();
        cfg.kappa = 0.95;
        cfg.beta = 60.0;
        cfg.max_iterations = 4;
        auto island = init_island(cfg, f.components(), 0, nullptr);
        std::vector<IterationReport> reps;
        while (!island.anneal.terminated) reps.push_back(run_iteration(island, cfg, f.components(), nullptr));
        CHECK(reps.size() <= 4);
        CHECK(island.anneal.lambda == 1.0);
        CHECK(reps.back().forced);
        for (std::size_t i = 1; i < island.lambda_history.size(); ++i)
            CHECK(island.lambda_history[i] > island.lambda_history[i - 1]);
        CHECK_THROWS_AS((void)run_iteration(island, cfg, f.components(), nullptr), Error);
    }

    TEST_CASE("rank order: reward descending, then older birth, stable") {
        const std::vector<Particle> ps = {make("a", 0.5, 2), make("b", 0.9, 3), make("c", 0.5, 1), make("d", 0.5, 1)};
        CHECK(rank_particles(ps) == std::vector<std::size_t>{1, 2, 3, 0});
    }

    TEST_CASE("migration sends copies of the top m and truncates to N") {
        std::vector<IslandState> islands(3);
        for (int i = 0; i < 3; ++i) {
            islands[i].island_id = i;
            for (int k = 0; k < 4; ++k)
                islands[i].particles.push_back(make(std::to_string(i) + std::to_string(k), 0.1 * (i * 4 + k), k, i));
        }
        const auto before = islands;
        Rng rng(5);
        const auto sends = migrate(islands, 2, rng);
        REQUIRE(sends.size() == 3);
        std::map<int, std::vector<Particle>> arrivals;
        for (const auto& s : sends) {
            CHECK(s.from != s.to);
            REQUIRE(s.migrants.size() == 2);
            // Top two of the sender.
            const auto order = rank_particles(before[s.from].particles);
            CHECK(s.migrants[0].program == before[s.from].particles[order[0]].program);
            CHECK(s.migrants[1].program == before[s.from].particles[order[1]].program);
            for (const auto& m : s.migrants) {
                CHECK(m.migrated);
                CHECK(m.island_id == s.to);
                arrivals[s.to].push_back(m);
            }
        }
        for (int i = 0; i < 3; ++i) {
            CHECK(islands[i].particles.size() == 4);
            std::vector<Particle> merged = before[i].particles;
            merged.insert(merged.end(), arrivals[i].begin(), arrivals[i].end());
            const auto order = rank_particles(merged);
            for (int k = 0; k < 4; ++k) CHECK(islands[i].particles[k].program == merged[order[k]].program);
        }

        std::vector<IslandState> single(1);
        single[0].particles.push_back(make("x", 1.0, 0));
        CHECK(migrate(single, 1, rng).empty());
    }

    TEST_CASE("parallel_for covers every index and rethrows the first failure") {
        std::vector<std::atomic<int>> hits(100);
        parallel_for(100, 7, [&](std::size_t i) { hits[i]++; });
        for (auto& h : hits) CHECK(h.load() == 1);
        try {
            parallel_for(50, 4, [](std::size_t i) {
                if (i == 17 || i == 33) throw Error(ErrorCode::InvalidArgument, std::to_string(i));
            });
            FAIL("expected a rethrow");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("17") != std::string::npos);
        }
    }

    TEST_CASE("logs are byte-identical across degrees of parallelism") {
        const BitsFixture f;
        RunConfig a = small_config();
        RunConfig b = a;
        b.max_concurrent_chains = 5;
        b.parallel_islands = true;
        const std::string la = run_log_bytes(a, f.components());
        CHECK(la == run_log_bytes(a, f.components()));
        CHECK(la == run_log_bytes(b, f.components()));
        RunConfig c = a;
        c.seed = 100;
        CHECK(la != run_log_bytes(c, f.components()));
    }

    TEST_CASE("engine epochs, migration cadence and run_end") {
        const BitsFixture f;
        testutil::TempDir dir;
        RunConfig cfg = small_config();
        {
            RunLogWriter log(dir.path());
            Engine engine(cfg, f.components(), &log);
            engine.run();
            CHECK(engine.finished());
            for (const auto& s : engine.islands()) CHECK(s.anneal.lambda == 1.0);
        }
        const auto log = read_event_log(dir.path());
        std::set<int> migration_epochs;
        int last_epoch = 0;
        for (const auto& e : log.events) {
            REQUIRE(e.contains("epoch"));
            CHECK(e["epoch"].get<int>() >= last_epoch);
            last_epoch = e["epoch"].get<int>();
            if (e["kind"] == "migration") migration_epochs.insert(e["epoch"].get<int>());
        }
        for (int ep : migration_epochs) CHECK(ep % cfg.migration_interval == 0);
        CHECK_FALSE(migration_epochs.empty());
        CHECK(log.events.front()["kind"] == "run_start");
        CHECK(log.events.back()["kind"] == "run_end");
        CHECK(log.events.back()["checkpoint"] == true);
    }

    TEST_CASE("full ratio requires densities") {
        const BitsFixture f;
        const SeedProgramPrior seed(Program("000000", "bits"));
        RunConfig cfg = small_config();
        cfg.acceptance_mode = AcceptanceMode::FullRatio;
        try {
            Engine e(cfg, {&f.kernel, &f.evaluator, &seed, nullptr});
            FAIL("expected DensityUnavailable");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DensityUnavailable);
        }
        CHECK_NOTHROW(Engine(cfg, f.components()));
    }

    TEST_CASE("particle and stats JSON round trip") {
        Particle p = make("1010", 0.5, 3, 2);
        p.migrated = true;
        p.lineage_id = "abc";
        const Particle q = particle_from_json(particle_to_json(p));
        CHECK(q.program == p.program);
        CHECK(q.reward.value == 0.5);
        CHECK(q.reward.valid);
        CHECK(q.born_iteration == 3);
        CHECK(q.island_id == 2);
        CHECK(q.migrated);
        CHECK(q.lineage_id == "abc");
        KernelStats s;
        s[KernelId::RewriteNoInspo] = {4.0, 7.0};
        const KernelStats t = kernel_stats_from_json(kernel_stats_to_json(s));
        CHECK(t[KernelId::RewriteNoInspo].alpha == 4.0);
        CHECK(t[KernelId::RewriteNoInspo].beta == 7.0);
    }
}
