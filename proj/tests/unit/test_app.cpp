#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "mock_llm.hpp"
#include "smcprog/app.hpp"
#include "smcprog/error.hpp"
#include "smcprog/runlog.hpp"

using namespace smcprog;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path config_path(const std::string& name) { return fs::path(SMCPROG_SOURCE_DIR) / "configs" / name; }

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(const fs::path& config, const fs::path& dir, std::optional<int> stop_after = std::nullopt) {
    std::ostringstream out, err;
    RunOptions opt;
    opt.run_dir = dir;
    opt.stop_after_epoch = stop_after;
    const int code = cmd_run(config, opt, out, err);
    return {code, out.str(), err.str()};
}

Outcome resume(const fs::path& dir) {
    std::ostringstream out, err;
    const int code = cmd_resume(dir, {}, out, err);
    return {code, out.str(), err.str()};
}

json load(const fs::path& p) { return json::parse(testutil::read_file(p)); }

/// The mock-LLM config pointed at a live server.
fs::path write_mock_config(const testutil::TempDir& dir, int port) {
    json cfg = load(config_path("onemax_mock_llm.json"));
    cfg["llm"]["base_url"] = "http://127.0.0.1:" + std::to_string(port);
    const fs::path p = dir / "config.json";
    testutil::write_file(p, cfg.dump(2));
    return p;
}

constexpr const char* kKey = "sk-test-key-0042";

}  // namespace

TEST_SUITE("app") {
    TEST_CASE("bitflip run writes summary, diagnostics and exports") {
        testutil::TempDir tmp;
        const fs::path dir = tmp / "run";
        const auto r = run(config_path("onemax_bitflip.json"), dir);
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(r.out.find("run terminated") != std::string::npos);

        const json summary = load(dir / kSummaryFile);
        CHECK(summary["status"] == "terminated");
        CHECK(summary["llm_calls"] == 0);
        CHECK(summary["best"]["reward"].get<double>() > 0.5);
        CHECK(summary["islands"].size() == 2);
        for (const auto& isl : summary["islands"]) {
            CHECK(isl["lambdas"].back() == 1.0);
            CHECK(isl["iterations"].get<int>() <= 20);
        }
        const json diag = load(dir / kDiagnosticsFile);
        CHECK(diag["kappa"] == 0.5);
        CHECK(diag["min_ess_fraction_unforced"].get<double>() >= 0.5 - 1e-9);
        CHECK(fs::exists(dir / kConfigFile));
        CHECK_FALSE(fs::exists(dir / kErrorFile));

        std::ostringstream out, err;
        REQUIRE(cmd_export(dir, "all", out, err) == 0);
        const auto first = testutil::read_file(dir / "export" / "kernels.csv");
        const auto flow = testutil::read_file(dir / "export" / "flow.csv");
        REQUIRE(cmd_export(dir, "all", out, err) == 0);
        CHECK(testutil::read_file(dir / "export" / "kernels.csv") == first);
        CHECK(testutil::read_file(dir / "export" / "flow.csv") == flow);
        for (const auto& f : export_files("all")) CHECK(fs::exists(dir / "export" / f));

        // Per iteration, selections across kernels add up to N * K.
        std::map<std::pair<int, int>, long> selected;
        std::istringstream lines(first);
        std::string line;
        std::getline(lines, line);
        CHECK(line.rfind("island,t,kernel,selected", 0) == 0);
        while (std::getline(lines, line)) {
            std::vector<std::string> cols;
            std::stringstream ss(line);
            for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
            selected[{std::stoi(cols[0]), std::stoi(cols[1])}] += std::stol(cols[3]);
        }
        CHECK_FALSE(selected.empty());
        for (const auto& [key, n] : selected) CHECK(n == 32 * 4);

        CHECK(cmd_export(dir, "nonsense", out, err) == 2);
    }

    TEST_CASE("run refuses a used directory; resume of a finished run is a no-op") {
        testutil::TempDir tmp;
        const fs::path dir = tmp / "run";
        REQUIRE(run(config_path("onemax_bitflip.json"), dir).code == 0);
        const auto events = testutil::read_file(dir / kEventsFile);
        const auto again = run(config_path("onemax_bitflip.json"), dir);
        CHECK(again.code == 2);
        CHECK(again.err.find("resume") != std::string::npos);
        const auto r = resume(dir);
        CHECK(r.code == 0);
        CHECK(r.out.find("already complete") != std::string::npos);
        CHECK(testutil::read_file(dir / kEventsFile) == events);
    }

    TEST_CASE("resume and export failures") {
        testutil::TempDir tmp;
        const auto r = resume(tmp.path());
        CHECK(r.code == 1);
        CHECK(r.err.find("NoCheckpoint") != std::string::npos);

        const fs::path dir = tmp / "run";
        REQUIRE(run(config_path("onemax_bitflip.json"), dir, 1).code == 0);
        {
            std::ofstream f(dir / kEventsFile, std::ios::app | std::ios::binary);
            f << "{\"v\":1,\"seq\":";
        }
        std::ostringstream out, err;
        CHECK(cmd_export(dir, "all", out, err) == 1);
        CHECK(err.str().find("CorruptLog") != std::string::npos);
        CHECK(cmd_export(tmp / "absent", "all", out, err) == 1);
    }

    TEST_CASE("interrupted bitflip run resumes to the same log") {
        testutil::TempDir tmp;
        REQUIRE(run(config_path("onemax_bitflip.json"), tmp / "full").code == 0);
        const fs::path part = tmp / "part";
        const auto first = run(config_path("onemax_bitflip.json"), part, 2);
        REQUIRE(first.code == 0);
        CHECK(load(part / kSummaryFile)["status"] == "incomplete");
        {
            std::ofstream f(part / kEventsFile, std::ios::app | std::ios::binary);
            f << "{\"v\":1,\"seq\":99999,\"kind\":\"propo";
        }
        const auto r = resume(part);
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(testutil::read_file(part / kEventsFile) == testutil::read_file(tmp / "full" / kEventsFile));
        CHECK(testutil::read_file(part / kSummaryFile) == testutil::read_file(tmp / "full" / kSummaryFile));
    }

    TEST_CASE("dry run validates without writing") {
        testutil::TempDir tmp;
        std::ostringstream out, err;
        RunOptions opt;
        opt.dry_run = true;
        opt.run_dir = tmp / "run";
        opt.seed = 17;
        REQUIRE(cmd_run(config_path("onemax_bitflip.json"), opt, out, err) == 0);
        const json j = json::parse(out.str());
        CHECK(j["dry_run"] == true);
        CHECK(j["max_proposals"] == 2 * 32 * 4 * 20);
        CHECK(j["config"]["engine"]["seed"] == 17);
        CHECK_FALSE(fs::exists(tmp / "run"));

        std::ostringstream o2, e2;
        CHECK(cmd_run(tmp / "missing.json", {}, o2, e2) == 2);
    }

    TEST_CASE("mock LLM run: accounting, redaction, determinism, resume") {
        ::setenv("SMCPROG_API_KEY", kKey, 1);
        mock::MockLlmOptions opts;
        opts.api_key = kKey;
        opts.rate_limit_first = 2;
        mock::MockLlmServer server(opts);
        server.start();
        testutil::TempDir tmp;
        const fs::path cfg = write_mock_config(tmp, server.port());

        const auto a = run(cfg, tmp / "a");
        REQUIRE_MESSAGE(a.code == 0, a.err);
        const auto log = read_event_log(tmp / "a");
        long with_call = 0;
        for (const auto& e : log.events)
            if (e["kind"] == "proposal" && e["llm_call"] == true) ++with_call;
        const json summary = load(tmp / "a" / kSummaryFile);
        CHECK(summary["llm_calls"] == with_call);
        CHECK(with_call > 0);
        const auto transcripts = testutil::read_file(tmp / "a" / kTranscriptsFile);
        CHECK_FALSE(transcripts.empty());
        CHECK(transcripts.find(kKey) == std::string::npos);

        const auto b = run(cfg, tmp / "b");
        REQUIRE(b.code == 0);
        CHECK(testutil::read_file(tmp / "a" / kEventsFile) == testutil::read_file(tmp / "b" / kEventsFile));

        REQUIRE(run(cfg, tmp / "c", 1).code == 0);
        const auto r = resume(tmp / "c");
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(testutil::read_file(tmp / "c" / kEventsFile) == testutil::read_file(tmp / "a" / kEventsFile));
        CHECK(testutil::read_file(tmp / "c" / kTranscriptsFile) == transcripts);
    }

    TEST_CASE("an outage stops the run with error.json and resume finishes it") {
        ::setenv("SMCPROG_API_KEY", kKey, 1);
        testutil::TempDir tmp;
        int port = 0;
        {
            mock::MockLlmServer ref;
            ref.start();
            const fs::path cfg = write_mock_config(tmp, ref.port());
            REQUIRE(run(cfg, tmp / "ref").code == 0);
        }
        {
            mock::MockLlmOptions opts;
            opts.outage_after = 20;
            mock::MockLlmServer flaky(opts);
            flaky.start();
            port = flaky.port();
            const fs::path cfg = write_mock_config(tmp, port);
            const auto r = run(cfg, tmp / "run");
            CHECK(r.code == 1);
            CHECK(fs::exists(tmp / "run" / kErrorFile));
            CHECK(load(tmp / "run" / kErrorFile)["error"]["code"] == "HttpStatusError");
            CHECK(load(tmp / "run" / kSummaryFile)["status"] == "incomplete");
        }
        mock::MockLlmServer healthy;
        healthy.start("127.0.0.1", port);
        const auto r = resume(tmp / "run");
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK_FALSE(fs::exists(tmp / "run" / kErrorFile));
        CHECK(load(tmp / "run" / kSummaryFile)["status"] == "terminated");
        // The log differs from the reference only by its base_url, which never enters events.
        CHECK(testutil::read_file(tmp / "run" / kEventsFile) == testutil::read_file(tmp / "ref" / kEventsFile));
    }

    TEST_CASE("summaries are pure projections") {
        std::vector<json> events = {
            {{"kind", "run_start"}, {"seq", 0}, {"epoch", 0}, {"n_islands", 1}},
        };
        const json s = summarize_events(events);
        CHECK(s["status"] == "incomplete");
        CHECK(s["llm_calls"] == 0);
        CHECK(summarize_events(events) == s);
        CHECK(export_files("schedule").size() == 2);
        CHECK_THROWS_AS((void)export_files("bogus"), Error);
    }
}
