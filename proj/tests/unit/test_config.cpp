#include "doctest.h"
#include "helpers.hpp"
#include "smcprog/config.hpp"
#include "smcprog/error.hpp"

using namespace smcprog;
using nlohmann::json;

namespace {

json minimal() {
    return {{"prior", {{"kind", "seed_program"}, {"source", "print(1)"}}},
            {"evaluator", {{"kind", "subprocess"}, {"command", "python3"}}}};
}

bool invalid(const json& doc, const std::string& needle = "") {
    try {
        (void)parse_config(doc, "/base");
    } catch (const Error& e) {
        return e.code() == ErrorCode::InvalidConfig && std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("defaults match the reference settings") {
        const auto c = parse_config(minimal(), "/base");
        CHECK(c.engine.n_islands == 2);
        CHECK(c.engine.particles_per_island == 8);
        CHECK(c.engine.n_proposals == 2);
        CHECK(c.engine.beta == 20.0);
        CHECK(c.engine.kappa == 0.9);
        CHECK(c.engine.min_iterations == 3);
        CHECK(c.engine.max_iterations == 15);
        CHECK(c.engine.migration_interval == 3);
        CHECK(c.engine.migration_size == 1);
        CHECK(c.engine.kernel_selection.mode == KernelSelectionMode::Adaptive);
        CHECK(c.engine.acceptance_mode == AcceptanceMode::RewardOnly);
        CHECK(c.proposal_kind == "llm");
        CHECK(c.embedding.kind == "hashed_trigram");
        CHECK(c.evaluator.spec.command == "python3");
    }

    TEST_CASE("unknown keys and bad enums are rejected") {
        json d = minimal();
        d["engine"] = {{"betta", 3}};
        CHECK(invalid(d, "engine.betta"));
        d = minimal();
        d["extra"] = 1;
        CHECK(invalid(d, "config.extra"));
        d = minimal();
        d["engine"] = {{"acceptance_mode", "sometimes"}};
        CHECK(invalid(d, "acceptance_mode"));
        d = minimal();
        d["engine"] = {{"kernel_selection", "fixed:diff_sideways"}};
        CHECK(invalid(d, "kernel"));
        d = minimal();
        d["engine"] = {{"beta", "hot"}};
        CHECK(invalid(d, "wrong type"));
        d = minimal();
        d["proposal"] = {{"kind", "oracle"}};
        CHECK(invalid(d, "proposal.kind"));
        d = minimal();
        d["evaluator"]["timeout_ms"] = 0;
        CHECK(invalid(d, "timeout_ms"));
        d = minimal();
        d["evaluator"]["file_name"] = "../x.py";
        CHECK(invalid(d, "file_name"));
        d = minimal();
        d["prior"].erase("source");
        CHECK(invalid(d, "prior.source"));
    }

    TEST_CASE("engine bounds are validated") {
        json d = minimal();
        d["engine"] = {{"kappa", 1.5}};
        CHECK(invalid(d));
        d["engine"] = {{"min_iterations", 5}, {"max_iterations", 4}};
        CHECK(invalid(d));
        d["engine"] = {{"particles_per_island", 0}};
        CHECK(invalid(d));
    }

    TEST_CASE("kernel selection strings") {
        for (const char* s : {"adaptive", "uniform", "fixed:diff_with_inspo", "fixed:rewrite_no_inspo"})
            CHECK(kernel_selection_to_string(parse_kernel_selection(s)) == s);
        CHECK(parse_kernel_selection("fixed:rewrite_with_inspo").fixed == KernelId::RewriteWithInspo);
    }

    TEST_CASE("full ratio is limited to density-known components") {
        json d = minimal();
        d["engine"] = {{"acceptance_mode", "full_ratio"}};
        CHECK(invalid(d, "full_ratio"));
        d = {{"engine", {{"acceptance_mode", "full_ratio"}}},
             {"prior", {{"kind", "uniform_bitstring"}, {"n_bits", 6}}},
             {"evaluator", {{"kind", "bitstring"}, {"n_bits", 6}}},
             {"proposal", {{"kind", "bitflip"}}}};
        const auto c = parse_config(d, "/base");
        CHECK(c.engine.acceptance_mode == AcceptanceMode::FullRatio);
        const auto rt = build_components(c);
        CHECK(rt.prior->has_density());
        CHECK(rt.kernel->has_density());
        CHECK(rt.client == nullptr);
    }

    TEST_CASE("paths: command, config_dir and source_file") {
        testutil::TempDir dir;
        testutil::write_file(dir / "seed.py", "x = 1\n");
        json d = {{"prior", {{"kind", "seed_program"}, {"source_file", "seed.py"}}},
                  {"evaluator",
                   {{"kind", "subprocess"},
                    {"command", "./bin/eval"},
                    {"args", {"{config_dir}/score.py", "{program}", "--flag"}}}}};
        const auto c = parse_config(d, dir.path());
        CHECK(c.prior.source == "x = 1\n");
        CHECK(c.evaluator.spec.command == (dir.path() / "bin/eval").string());
        CHECK(c.evaluator.spec.args[0] == std::filesystem::absolute(dir.path()).string() + "/score.py");
        CHECK(c.evaluator.spec.args[1] == "{program}");
        CHECK(c.evaluator.spec.args[2] == "--flag");

        d["prior"]["source"] = "y";
        CHECK(invalid(d, "exclusive"));
        d["prior"].erase("source");
        d["prior"]["source_file"] = "missing.py";
        try {
            (void)parse_config(d, dir.path());
            FAIL("expected InvalidConfig");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::InvalidConfig);
        }
    }

    TEST_CASE("normalized JSON round trips") {
        json d = minimal();
        d["engine"] = {{"beta", 7.5}, {"kernel_selection", "fixed:rewrite_no_inspo"}, {"seed", 11}};
        d["llm"] = {{"models", {{{"name", "m1"}, {"weight", 2.0}}, {{"name", "m2"}}}},
                    {"max_retries", 4},
                    {"api_key_env", "KEY"}};
        d["run_dir"] = "out";
        const auto c = parse_config(d, "/base");
        const json n = config_to_json(c);
        const auto c2 = parse_config(n, "/elsewhere");
        CHECK(config_to_json(c2) == n);
        CHECK(c2.engine.beta == 7.5);
        CHECK(c2.engine.seed == 11);
        CHECK(c2.llm.kernel.models.size() == 2);
        CHECK(c2.llm.client.retry.max_retries == 4);
        CHECK(c2.engine.kernel_selection.fixed == KernelId::RewriteNoInspo);
    }

    TEST_CASE("load_config reports unreadable and malformed files") {
        testutil::TempDir dir;
        testutil::write_file(dir / "bad.json", "{ nope");
        for (const auto& p : {dir / "bad.json", dir / "absent.json"}) {
            try {
                (void)load_config(p);
                FAIL("expected InvalidConfig");
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::InvalidConfig);
            }
        }
        testutil::write_file(dir / "ok.json", minimal().dump());
        CHECK(load_config(dir / "ok.json").prior.source == "print(1)");
    }

    TEST_CASE("uniform bitstring prior") {
        UniformBitstringPrior p(5);
        Rng rng(1);
        for (int i = 0; i < 20; ++i) {
            const Program x = p.sample(rng);
            CHECK(x.source().size() == 5);
            CHECK(x.source().find_first_not_of("01") == std::string::npos);
            CHECK(*p.density(x) == doctest::Approx(1.0 / 32));
        }
        CHECK(*p.density(Program("0101", "bits")) == 0.0);
    }
}
