#include "smcprog/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "smcprog/config.hpp"
#include "smcprog/error.hpp"
#include "smcprog/finite.hpp"
#include "smcprog/island.hpp"
#include "smcprog/oracle.hpp"
#include "smcprog/runlog.hpp"
#include "smcprog/schedule.hpp"

namespace smcprog {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_json_file(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
}

json error_record(const Error& e) {
    return {{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}}};
}

int report_error(const Error& e, std::ostream& err) {
    err << error_record(e).dump() << '\n';
    const auto c = e.code();
    return (c == ErrorCode::InvalidConfig || c == ErrorCode::UnknownSuite || c == ErrorCode::InvalidArgument)
               ? kExitUsage
               : kExitFailure;
}

void finalize_outputs(const fs::path& dir) {
    const auto log = read_event_log(dir, true);
    write_json_file(dir / kSummaryFile, summarize_events(log.events));
    write_json_file(dir / kDiagnosticsFile, diagnostics_from_events(log.events));
}

int execute(Engine& engine, const fs::path& dir, std::ostream& out, std::ostream& err) {
    try {
        engine.run();
    } catch (const Error& e) {
        json rec = error_record(e);
        rec["epoch"] = engine.epoch();
        write_json_file(dir / kErrorFile, rec);
        finalize_outputs(dir);
        err << rec.dump() << '\n';
        return kExitFailure;
    }
    if (fs::exists(dir / kErrorFile)) fs::remove(dir / kErrorFile);
    finalize_outputs(dir);
    const json summary = json::parse(std::ifstream(dir / kSummaryFile));
    out << "run " << summary["status"].get<std::string>() << ": best reward "
        << (summary["best"].is_null() ? json(nullptr) : summary["best"]["reward"]).dump() << ", llm calls "
        << summary["llm_calls"].get<long long>() << ", run dir " << dir.string() << '\n';
    return kExitOk;
}

std::vector<Particle> particles_from(const json& arr) {
    std::vector<Particle> ps;
    for (const auto& p : arr) ps.push_back(particle_from_json(p));
    return ps;
}

/// Island states as of events[0..=upto].
std::vector<IslandState> rebuild_islands(const std::vector<json>& events, std::size_t upto, const AppConfig& cfg,
                                         const std::shared_ptr<const EmbeddingProvider>& embedder) {
    std::vector<IslandState> islands;
    for (int i = 0; i < cfg.engine.n_islands; ++i) {
        IslandState s{i, {}, {}, {}, Archive(embedder), {}};
        s.anneal.beta_target = cfg.engine.beta;
        islands.push_back(std::move(s));
    }
    const auto island_at = [&](const json& e) -> IslandState& {
        const int id = e.at("island").get<int>();
        if (id < 0 || id >= cfg.engine.n_islands) throw Error(ErrorCode::CorruptLog, "island id out of range");
        return islands[static_cast<std::size_t>(id)];
    };
    for (std::size_t k = 0; k <= upto; ++k) {
        const json& e = events[k];
        const std::string kind = e["kind"].get<std::string>();
        if (kind == "init_particle") {
            IslandState& s = island_at(e);
            Particle p = particle_from_json(e);
            s.archive.record({p.program, p.reward, 0, "init", true, s.island_id});
            s.particles.push_back(std::move(p));
        } else if (kind == "proposal") {
            if (e["candidate_source"].is_null()) continue;
            IslandState& s = island_at(e);
            s.archive.record({Program(e["candidate_source"].get<std::string>(), e["candidate_language"].get<std::string>()),
                              RewardValue{e["reward"].get<double>(), e["valid"].get<bool>()}, e["t"].get<int>(),
                              e["used"].get<std::string>(), e["accepted"].get<bool>(), s.island_id});
        } else if (kind == "iteration_end") {
            IslandState& s = island_at(e);
            s.particles = particles_from(e["particles"]);
            s.anneal.lambda = e["lambda"].get<double>();
            s.anneal.iteration = e["t"].get<int>();
            s.anneal.terminated = e["terminated"].get<bool>();
            s.kernel_stats = kernel_stats_from_json(e["kernel_stats"]);
            s.lambda_history.push_back(s.anneal.lambda);
        } else if (kind == "migration") {
            for (const auto& pop : e["populations"])
                islands.at(pop["island"].get<std::size_t>()).particles = particles_from(pop["particles"]);
        }
    }
    for (const auto& s : islands)
        if (s.particles.size() != static_cast<std::size_t>(cfg.engine.particles_per_island))
            throw Error(ErrorCode::CorruptLog, "checkpoint population of island " + std::to_string(s.island_id) +
                                                   " has the wrong size");
    return islands;
}

// ------------------------------------------------------------------ export

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class Csv {
public:
    explicit Csv(std::string header) : text_(std::move(header) + "\n") {}
    template <typename... Cells>
    void row(const Cells&... cells) {
        std::size_t i = 0;
        ((text_ += (i++ ? "," : "") + cell(cells)), ...);
        text_ += '\n';
    }
    void save(const fs::path& p) const {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        out << text_;
    }

private:
    static std::string cell(double v) { return num(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(long long v) { return std::to_string(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "1" : "0"; }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }
    std::string text_;
};

using Key = std::pair<int, int>;  // (island, t)

struct EventIndex {
    std::map<Key, const json*> starts, weights, resamples, ends;
    std::map<Key, std::vector<const json*>> proposals;
    std::vector<const json*> inits;

    explicit EventIndex(const std::vector<json>& events) {
        for (const auto& e : events) {
            const std::string kind = e["kind"].get<std::string>();
            if (kind == "init_particle") {
                inits.push_back(&e);
                continue;
            }
            if (!e.contains("t")) continue;
            const Key k{e["island"].get<int>(), e["t"].get<int>()};
            if (kind == "iteration_start") starts[k] = &e;
            else if (kind == "weights") weights[k] = &e;
            else if (kind == "resample") resamples[k] = &e;
            else if (kind == "iteration_end") ends[k] = &e;
            else if (kind == "proposal") proposals[k].push_back(&e);
        }
    }
};

void export_schedule(const EventIndex& ix, const fs::path& dir) {
    Csv schedule("island,t,lambda_prev,lambda,delta_beta,beta_t,ess,ess_fraction,forced");
    Csv curves("island,t,lambda,ess");
    for (const auto& [k, e] : ix.starts) {
        const json& s = *e;
        schedule.row(k.first, k.second, s["lambda_prev"].get<double>(), s["lambda"].get<double>(),
                     s["delta_beta"].get<double>(), s["beta_t"].get<double>(), s["ess"].get<double>(),
                     s["ess_fraction"].get<double>(), s["forced"].get<bool>());
        for (const auto& pt : s["ess_curve"]) curves.row(k.first, k.second, pt[0].get<double>(), pt[1].get<double>());
    }
    schedule.save(dir / "schedule.csv");
    curves.save(dir / "ess_curves.csv");
}

void export_kernels(const EventIndex& ix, const fs::path& dir) {
    Csv csv("island,t,kernel,selected,used,accepted,successes,cum_selected,cum_accepted");
    std::map<std::pair<int, std::string>, std::pair<long long, long long>> cumulative;
    for (const auto& [k, props] : ix.proposals) {
        for (KernelId id : kAllKernels) {
            const std::string name(kernel_name(id));
            long long selected = 0, used = 0, accepted = 0, successes = 0;
            for (const json* p : props) {
                selected += (*p)["selected"] == name;
                if ((*p)["used"] == name) {
                    ++used;
                    accepted += (*p)["accepted"].get<bool>();
                    successes += (*p)["success"].get<bool>();
                }
            }
            auto& cum = cumulative[{k.first, name}];
            cum.first += selected;
            cum.second += accepted;
            csv.row(k.first, k.second, name, selected, used, accepted, successes, cum.first, cum.second);
        }
    }
    csv.save(dir / "kernels.csv");
}

void export_flow(const EventIndex& ix, const fs::path& dir) {
    Csv flow("island,t,slot,ancestor,ancestor_digest,ancestor_reward,ancestor_weight,child_digest,child_reward,accepted_steps");
    Csv probs("island,t,rank,reward,probability");
    for (const auto& [k, w] : ix.weights) {
        const json& weights = *w;
        const auto rewards = weights["rewards"].get<std::vector<double>>();
        const auto normalized = weights["normalized"].get<std::vector<double>>();
        std::vector<std::size_t> order(rewards.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rewards[a] > rewards[b]; });
        for (std::size_t r = 0; r < order.size(); ++r)
            probs.row(k.first, k.second, r + 1, rewards[order[r]], normalized[order[r]]);

        const auto rs = ix.resamples.find(k);
        const auto end = ix.ends.find(k);
        if (rs == ix.resamples.end() || end == ix.ends.end()) continue;
        const auto ancestors = (*rs->second)["ancestors"].get<std::vector<std::size_t>>();
        const json& children = (*end->second)["particles"];
        std::vector<int> accepted(ancestors.size(), 0);
        if (const auto ps = ix.proposals.find(k); ps != ix.proposals.end())
            for (const json* p : ps->second) accepted.at((*p)["chain"].get<std::size_t>()) += (*p)["accepted"].get<bool>();
        for (std::size_t slot = 0; slot < ancestors.size(); ++slot) {
            const std::size_t a = ancestors[slot];
            flow.row(k.first, k.second, slot, a, weights["digests"][a].get<std::string>(), rewards[a], normalized[a],
                     children[slot]["digest"].get<std::string>(), children[slot]["reward"].get<double>(), accepted[slot]);
        }
    }
    flow.save(dir / "flow.csv");
    probs.save(dir / "resample_probs.csv");
}

void export_best_curve(const EventIndex& ix, const fs::path& dir) {
    Csv csv("island,t,iteration_best,best_so_far");
    std::map<int, double> best;
    for (const json* e : ix.inits) {
        if (!(*e)["valid"].get<bool>()) continue;
        const int island = (*e)["island"].get<int>();
        const double r = (*e)["reward"].get<double>();
        best[island] = best.contains(island) ? std::max(best[island], r) : r;
    }
    for (const auto& [island, b] : best) csv.row(island, 0, b, b);
    for (const auto& [k, props] : ix.proposals) {
        std::optional<double> it_best;
        for (const json* p : props)
            if ((*p)["valid"].get<bool>() && !(*p)["candidate_source"].is_null()) {
                const double r = (*p)["reward"].get<double>();
                it_best = it_best ? std::max(*it_best, r) : r;
            }
        if (it_best) best[k.first] = best.contains(k.first) ? std::max(best[k.first], *it_best) : *it_best;
        const double so_far = best.contains(k.first) ? best[k.first] : std::nan("");
        csv.row(k.first, k.second, it_best ? num(*it_best) : std::string(""), so_far);
    }
    csv.save(dir / "best_curve.csv");
}

// ------------------------------------------------------------- oracle suite

struct CheckPrinter {
    std::ostream& out;
    json& report;
    bool ok = true;

    void check(const std::string& name, bool pass, const std::string& detail, json data = nullptr) {
        out << (pass ? "[PASS] " : "[FAIL] ") << name << ": " << detail << '\n';
        ok = ok && pass;
        report["checks"].push_back({{"name", name}, {"pass", pass}, {"detail", detail}, {"data", std::move(data)}});
    }
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

FiniteSpace four_state_space() {
    std::vector<Program> states;
    for (int i = 0; i < 4; ++i) states.emplace_back("s" + std::to_string(i), "state");
    return FiniteSpace(std::move(states), {0.25, 0.25, 0.25, 0.25}, {0.0, 0.3, 0.7, 1.0});
}

std::vector<std::vector<double>> four_state_proposal() {
    return {{0.1, 0.6, 0.2, 0.1}, {0.3, 0.1, 0.5, 0.1}, {0.1, 0.1, 0.1, 0.7}, {0.4, 0.3, 0.2, 0.1}};
}

void suite_invariance(CheckPrinter& c) {
    const FiniteSpace cube = bitstring_space(3);
    const BitFlipKernel flip;
    for (double beta_t : {0.0, 1.0, 5.0, 20.0}) {
        const double res = check_invariance(cube, beta_t, flip);
        c.check("invariance.bitflip.beta_" + fmt(beta_t), res <= 1e-10, "residual " + fmt(res) + " <= 1e-10", res);
    }
    const IdentityKernel identity;
    const double id_res = check_invariance(cube, 5.0, identity);
    c.check("invariance.identity", id_res <= 1e-15, "residual " + fmt(id_res), id_res);

    const FiniteSpace four = four_state_space();
    const MatrixKernel biased(four, four_state_proposal());
    const double full = check_invariance(four, 2.0, biased, AcceptanceMode::FullRatio);
    const double approx = check_invariance(four, 2.0, biased, AcceptanceMode::RewardOnly);
    c.check("invariance.asymmetric.full_ratio", full <= 1e-10, "residual " + fmt(full), full);
    c.check("invariance.asymmetric.reward_only_gap", approx > 1e-6,
            "reward-only residual " + fmt(approx) + " (approximation gap, expected > 0)", approx);
}

void suite_ergodicity(CheckPrinter& c) {
    const FiniteSpace cube = bitstring_space(3);
    const BitFlipKernel flip;
    const ErgodicityFit fit = fit_ergodicity_rate(cube, 1.0, flip, 40);
    c.check("ergodicity.bitflip.rate", fit.rho_hat < 1.0 && fit.r_squared >= 0.99,
            "rho_hat " + fmt(fit.rho_hat) + ", C " + fmt(fit.c_hat) + ", R^2 " + fmt(fit.r_squared),
            {{"rho_hat", fit.rho_hat}, {"c_hat", fit.c_hat}, {"r_squared", fit.r_squared}, {"d", fit.d}});

    const auto flagged = [&](const ProposalKernel& k, const FiniteSpace& space) {
        try {
            (void)fit_ergodicity_rate(space, 1.0, k, 40);
        } catch (const Error& e) {
            return e.code() == ErrorCode::NonErgodic;
        }
        return false;
    };
    const IdentityKernel identity;
    c.check("ergodicity.identity.non_ergodic", flagged(identity, cube), "identity kernel flagged NonErgodic");

    const FiniteSpace four = four_state_space();
    const MatrixKernel split(four, {{0.5, 0.5, 0, 0}, {0.5, 0.5, 0, 0}, {0, 0, 0.5, 0.5}, {0, 0, 0.5, 0.5}});
    c.check("ergodicity.disconnected.non_ergodic", flagged(split, four), "two components flagged NonErgodic");
}

void suite_bridge(CheckPrinter& c) {
    Rng rng(20240601);
    int violations = 0;
    double worst_ratio = 0.0;
    for (int s = 0; s < 100; ++s) {
        const std::size_t n = 2 + rng.index(63);
        std::vector<double> prior(n), rewards(n);
        double total = 0.0;
        for (auto& p : prior) {
            p = -std::log(1.0 - rng.uniform());
            total += p;
        }
        for (auto& p : prior) p /= total;
        for (auto& r : rewards) r = 6.0 * rng.uniform() - 3.0;
        const double beta = 10.0 * rng.uniform();
        const RewardBounds b = RewardBounds::of(rewards);
        const double gamma = path_gamma(prior, rewards, beta);
        const double bound = std::exp(beta * b.delta_r);
        worst_ratio = std::max(worst_ratio, gamma / bound);
        violations += gamma > bound * (1.0 + 1e-12);
    }
    c.check("bridge.path_gamma.random_spaces", violations == 0,
            std::to_string(violations) + " violations over 100 spaces, max Gamma/bound " + fmt(worst_ratio),
            {{"violations", violations}, {"max_ratio", worst_ratio}});

    const FiniteSpace space = bitstring_space(8);
    const BitFlipKernel flip;
    RunConfig cfg = theorem1_reference_config();
    const auto res = theorem1_experiment(space, flip, cfg, 3, 0.05);
    int linf_bad = 0, ess_bad = 0, steps = 0;
    for (const auto& run : res.per_run) {
        double prev = 0.0;
        for (std::size_t i = 0; i < run.lambdas.size(); ++i) {
            const double delta_beta = (run.lambdas[i] - prev) * cfg.beta;
            linf_bad += run.bridge_linf[i] > std::exp(delta_beta * space.bounds().delta_r) * (1.0 + 1e-12);
            const bool forced = static_cast<int>(i) + 1 >= cfg.max_iterations;
            ess_bad += !forced && run.ess_fractions[i] < cfg.kappa;
            prev = run.lambdas[i];
            ++steps;
        }
    }
    c.check("bridge.linf_certificate", linf_bad == 0,
            std::to_string(linf_bad) + " of " + std::to_string(steps) + " steps exceed exp(delta_beta Delta_R)");
    c.check("bridge.ess_threshold", ess_bad == 0,
            std::to_string(ess_bad) + " of " + std::to_string(steps) + " chosen steps below kappa N");

    // ESS / N on iid draws from p_{t-1} against the exact 1 / gamma^2.
    const FiniteSpace cube = bitstring_space(6);
    double worst = 0.0;
    for (const auto& [bp, bt] : {std::pair{0.0, 1.0}, {1.0, 2.5}, {2.5, 4.0}}) {
        const auto prev = exact_tilted(cube, bp);
        std::vector<double> rewards;
        Rng draw(7);
        for (int k = 0; k < 20000; ++k) {
            double u = draw.uniform(), acc = 0.0;
            std::size_t idx = prev.size() - 1;
            for (std::size_t i = 0; i < prev.size(); ++i) {
                acc += prev[i];
                if (u < acc) {
                    idx = i;
                    break;
                }
            }
            rewards.push_back(cube.rewards()[idx]);
        }
        const double frac = ess(rewards, 0.0, 1.0, bt - bp) / static_cast<double>(rewards.size());
        worst = std::max(worst, std::abs(frac - 1.0 / bridge_l2_squared(cube, bp, bt)));
    }
    c.check("bridge.ess_tracks_l2", worst <= 0.02, "max |ESS/N - 1/gamma^2| = " + fmt(worst) + " <= 0.02", worst);
}

void suite_theorem1(CheckPrinter& c) {
    const FiniteSpace space = bitstring_space(8);
    const BitFlipKernel flip;
    RunConfig cfg = theorem1_reference_config();
    const auto res = theorem1_experiment(space, flip, cfg, 25, 0.05);
    c.check("theorem1.concentration", res.successes >= 19,
            std::to_string(res.successes) + "/25 runs within 0.05 of p*(f) = " + fmt(res.p_star_f),
            theorem1_to_json(res));
    c.check("theorem1.path_gamma", res.path_gamma <= res.gamma_bound,
            "Gamma " + fmt(res.path_gamma) + " <= exp(beta Delta_R) = " + fmt(res.gamma_bound));

    cfg.acceptance_mode = AcceptanceMode::RewardOnly;
    const auto arm = theorem1_experiment(space, flip, cfg, 25, 0.05);
    c.out << "[INFO] theorem1.reward_only_arm: " << arm.successes << "/25 runs within 0.05\n";
    c.report["reward_only_arm"] = theorem1_to_json(arm);
}

}  // namespace

// ---------------------------------------------------------------- projections

json summarize_events(const std::vector<json>& events) {
    json best = nullptr;
    long long llm_calls = 0, proposals = 0, accepted = 0;
    int n_islands = 0, epoch = 0;
    bool ended = false;
    std::map<int, json> islands;
    const auto consider = [&](const json& e, const std::string& source_key, const json& language) {
        if (!e["valid"].get<bool>() || e[source_key].is_null()) return;
        const double r = e["reward"].get<double>();
        if (best.is_null() || r > best["reward"].get<double>())
            best = {{"reward", r},
                    {"source", e[source_key]},
                    {"language", language},
                    {"digest", e.contains("candidate_digest") ? e["candidate_digest"] : e["digest"]},
                    {"island", e["island"]},
                    {"seq", e["seq"]}};
    };
    for (const auto& e : events) {
        const std::string kind = e["kind"].get<std::string>();
        epoch = std::max(epoch, e.value("epoch", 0));
        if (kind == "run_start") {
            n_islands = e["n_islands"].get<int>();
            for (int i = 0; i < n_islands; ++i)
                islands[i] = {{"island", i}, {"lambdas", json::array()}, {"iterations", 0}, {"terminated", false}};
        } else if (kind == "init_particle") {
            llm_calls += e["llm_call"].get<bool>();
            consider(e, "source", e["language"]);
        } else if (kind == "proposal") {
            ++proposals;
            accepted += e["accepted"].get<bool>();
            llm_calls += e["llm_call"].get<bool>();
            consider(e, "candidate_source", e["candidate_language"]);
        } else if (kind == "iteration_end") {
            auto& s = islands[e["island"].get<int>()];
            s["lambdas"].push_back(e["lambda"]);
            s["iterations"] = e["t"];
            s["terminated"] = e["terminated"];
            s["final_best_reward"] = e["best_reward"];
            s["final_mean_reward"] = e["mean_reward"];
        } else if (kind == "run_end") {
            ended = true;
        }
    }
    json per_island = json::array();
    for (auto& [_, s] : islands) per_island.push_back(std::move(s));
    return {{"status", ended ? "terminated" : "incomplete"},
            {"best", best},
            {"llm_calls", llm_calls},
            {"calls_accounting",
             "every chat-completion request is counted once, however many retries it took; initial particles are drawn from p0 without requests"},
            {"proposals", proposals},
            {"accepted", accepted},
            {"epochs", epoch},
            {"islands", std::move(per_island)}};
}

json diagnostics_from_events(const std::vector<json>& events) {
    json iterations = json::array();
    std::map<Key, json> ends;
    double kappa = 0.0;
    for (const auto& e : events)
        if (e["kind"] == "iteration_end") ends[{e["island"].get<int>(), e["t"].get<int>()}] = e;
        else if (e["kind"] == "run_start") kappa = e["kappa"].get<double>();
    double min_unforced = 1.0;
    int forced = 0;
    for (const auto& e : events) {
        if (e["kind"] != "iteration_start") continue;
        const Key k{e["island"].get<int>(), e["t"].get<int>()};
        json row = {{"island", k.first},      {"t", k.second},           {"lambda", e["lambda"]},
                    {"delta_beta", e["delta_beta"]}, {"ess", e["ess"]}, {"ess_fraction", e["ess_fraction"]},
                    {"forced", e["forced"]}};
        if (const auto it = ends.find(k); it != ends.end()) {
            const double props = it->second["proposals"].get<double>();
            row["acceptance_rate"] = props > 0 ? it->second["accepted"].get<double>() / props : 0.0;
            row["best_reward"] = it->second["best_reward"];
            row["mean_reward"] = it->second["mean_reward"];
        }
        if (e["forced"].get<bool>())
            ++forced;
        else
            min_unforced = std::min(min_unforced, e["ess_fraction"].get<double>());
        iterations.push_back(std::move(row));
    }
    return {{"kappa", kappa},
            {"min_ess_fraction_unforced", min_unforced},
            {"forced_steps", forced},
            {"iterations", std::move(iterations)}};
}

// ------------------------------------------------------------------ commands

int cmd_run(const fs::path& config_path, const RunOptions& options, std::ostream& out, std::ostream& err) {
    try {
        AppConfig cfg = load_config(config_path);
        if (options.seed) cfg.engine.seed = *options.seed;
        const fs::path dir = options.run_dir ? *options.run_dir
                             : !cfg.run_dir.empty() ? fs::path(cfg.run_dir)
                                                    : fs::path("runs") / ("seed-" + std::to_string(cfg.engine.seed));
        const RunConfig& r = cfg.engine;
        if (options.dry_run) {
            (void)build_components(cfg, options.transport);
            const long long bound = static_cast<long long>(r.n_islands) * r.particles_per_island * r.n_proposals *
                                    r.max_iterations;
            out << json{{"dry_run", true},
                        {"run_dir", dir.string()},
                        {"max_proposals", bound},
                        {"config", config_to_json(cfg)}}
                       .dump(2)
                << '\n';
            return kExitOk;
        }
        if (fs::exists(dir / kEventsFile) && fs::file_size(dir / kEventsFile) > 0)
            throw Error(ErrorCode::InvalidArgument, dir.string() + " already holds a run; use resume");
        fs::create_directories(dir);
        write_json_file(dir / kConfigFile, config_to_json(cfg));

        RuntimeComponents rc = build_components(cfg, options.transport);
        RunLogWriter writer(dir);
        writer.add_secret(rc.api_key);
        Engine engine(cfg.engine, rc.view(), &writer);
        engine.set_stop_after_epoch(options.stop_after_epoch);
        return execute(engine, dir, out, err);
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

int cmd_resume(const fs::path& run_dir, const RunOptions& options, std::ostream& out, std::ostream& err) {
    try {
        if (!fs::exists(run_dir / kEventsFile) || fs::file_size(run_dir / kEventsFile) == 0)
            throw Error(ErrorCode::NoCheckpoint, "no event log in " + run_dir.string());
        if (!fs::exists(run_dir / kConfigFile)) throw Error(ErrorCode::MissingRun, "no config.json in " + run_dir.string());
        std::ifstream in(run_dir / kConfigFile);
        const json doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw Error(ErrorCode::CorruptLog, "config.json is not valid JSON");
        const AppConfig cfg = parse_config(doc, run_dir);

        const LogContents log = read_event_log(run_dir, true);
        for (const auto& e : log.events)
            if (e["kind"] == "run_end") {
                finalize_outputs(run_dir);
                out << "run already complete; nothing to resume\n";
                return kExitOk;
            }
        const auto cp = last_checkpoint(log.events);
        if (!cp) throw Error(ErrorCode::NoCheckpoint, "event log has no complete checkpoint");
        const auto cp_seq = log.events[*cp]["seq"].get<std::uint64_t>();
        truncate_run_log(run_dir, cp_seq);

        RuntimeComponents rc = build_components(cfg, options.transport);
        std::vector<IslandState> islands = rebuild_islands(log.events, *cp, cfg, rc.embedder);
        long long calls = 0;
        for (std::size_t k = 0; k <= *cp; ++k) calls += log.events[k].value("llm_call", false);
        if (rc.client) rc.client->set_consumed(calls);

        RunLogWriter writer(run_dir, cp_seq + 1);
        writer.add_secret(rc.api_key);
        Engine engine(cfg.engine, rc.view(), &writer);
        engine.restore(std::move(islands), log.events[*cp].value("epoch", 0));
        engine.set_stop_after_epoch(options.stop_after_epoch);
        out << "resuming after seq " << cp_seq << " (epoch " << engine.epoch() << ")\n";
        return execute(engine, run_dir, out, err);
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

std::vector<std::string> export_files(const std::string& what) {
    if (what == "schedule") return {"schedule.csv", "ess_curves.csv"};
    if (what == "kernels") return {"kernels.csv"};
    if (what == "flow") return {"flow.csv", "resample_probs.csv"};
    if (what == "best-curve") return {"best_curve.csv"};
    if (what == "all")
        return {"schedule.csv", "ess_curves.csv", "kernels.csv", "flow.csv", "resample_probs.csv", "best_curve.csv"};
    throw Error(ErrorCode::InvalidArgument, "unknown export kind '" + what + "' (schedule, kernels, flow, best-curve, all)");
}

std::vector<fs::path> export_run(const fs::path& run_dir, const std::string& what) {
    const auto files = export_files(what);
    if (!fs::is_directory(run_dir)) throw Error(ErrorCode::MissingRun, run_dir.string() + " is not a run directory");
    const LogContents log = read_event_log(run_dir, false);
    const EventIndex ix(log.events);
    const fs::path dir = run_dir / "export";
    fs::create_directories(dir);
    if (what == "schedule" || what == "all") export_schedule(ix, dir);
    if (what == "kernels" || what == "all") export_kernels(ix, dir);
    if (what == "flow" || what == "all") export_flow(ix, dir);
    if (what == "best-curve" || what == "all") export_best_curve(ix, dir);
    std::vector<fs::path> out;
    for (const auto& f : files) out.push_back(dir / f);
    return out;
}

int cmd_export(const fs::path& run_dir, const std::string& what, std::ostream& out, std::ostream& err) {
    try {
        for (const auto& p : export_run(run_dir, what)) out << p.string() << '\n';
        return kExitOk;
    } catch (const Error& e) {
        return report_error(e, err);
    }
}

int cmd_oracle_check(const std::string& suite, std::ostream& out, std::ostream& err,
                     const std::optional<fs::path>& report_path) {
    static const std::vector<std::string> suites = {"invariance", "ergodicity", "bridge", "theorem1"};
    if (suite != "all" && std::find(suites.begin(), suites.end(), suite) == suites.end()) {
        err << error_record(Error(ErrorCode::UnknownSuite, "unknown suite '" + suite +
                                                               "' (invariance, ergodicity, bridge, theorem1, all)"))
                   .dump()
            << '\n';
        return kExitUsage;
    }
    json report = {{"suite", suite}, {"checks", json::array()}};
    CheckPrinter c{out, report};
    try {
        if (suite == "invariance" || suite == "all") suite_invariance(c);
        if (suite == "ergodicity" || suite == "all") suite_ergodicity(c);
        if (suite == "bridge" || suite == "all") suite_bridge(c);
        if (suite == "theorem1" || suite == "all") suite_theorem1(c);
    } catch (const Error& e) {
        return report_error(e, err);
    }
    report["pass"] = c.ok;
    if (report_path) write_json_file(*report_path, report);
    out << (c.ok ? "all checks passed" : "some checks failed") << '\n';
    return c.ok ? kExitOk : kExitFailure;
}

}  // namespace smcprog
