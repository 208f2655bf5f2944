#include "smcprog/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "smcprog/error.hpp"
#include "smcprog/finite.hpp"

namespace smcprog {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& section) {
    if (!obj.is_object()) bad(section + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.contains(key)) bad("unknown key " + section + "." + key);
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        bad(section + "." + key + " has the wrong type");
    }
}

void read_ms(const json& obj, const char* key, std::chrono::milliseconds& out, const std::string& section) {
    long long ms = out.count();
    read(obj, key, ms, section);
    if (ms <= 0) bad(section + "." + key + " must be > 0");
    out = std::chrono::milliseconds(ms);
}

std::string resolve(const std::string& p, const fs::path& base) {
    if (p.empty()) return p;
    const fs::path path(p);
    if (path.is_absolute() || base.empty()) return p;
    return (base / path).lexically_normal().string();
}

/// Commands are resolved against the config directory only when they look like paths.
std::string resolve_command(const std::string& cmd, const fs::path& base) {
    return cmd.find('/') == std::string::npos ? cmd : resolve(cmd, base);
}

}  // namespace

std::string kernel_selection_to_string(const KernelSelection& s) {
    switch (s.mode) {
        case KernelSelectionMode::Adaptive: return "adaptive";
        case KernelSelectionMode::Uniform: return "uniform";
        case KernelSelectionMode::Fixed: return "fixed:" + std::string(kernel_name(s.fixed));
    }
    return "adaptive";
}

KernelSelection parse_kernel_selection(std::string_view text) {
    if (text == "adaptive") return {KernelSelectionMode::Adaptive, KernelId::DiffNoInspo};
    if (text == "uniform") return {KernelSelectionMode::Uniform, KernelId::DiffNoInspo};
    if (text.starts_with("fixed:")) {
        const auto id = parse_kernel_name(text.substr(6));
        if (!id) bad("unknown kernel in kernel_selection: " + std::string(text.substr(6)));
        return {KernelSelectionMode::Fixed, *id};
    }
    bad("kernel_selection must be adaptive, uniform or fixed:<kernel>");
}

AppConfig parse_config(const json& doc, const fs::path& base_dir) {
    check_keys(doc, {"engine", "prior", "evaluator", "proposal", "llm", "embedding", "run_dir"}, "config");
    AppConfig c;

    if (doc.contains("engine")) {
        const auto& e = doc["engine"];
        const std::string s = "engine";
        check_keys(e,
                   {"n_islands", "particles_per_island", "n_proposals", "beta", "kappa", "min_iterations",
                    "max_iterations", "migration_interval", "migration_size", "top_k_inspiration",
                    "diverse_inspirations", "reward_floor", "seed", "kernel_selection", "acceptance_mode",
                    "lambda_tolerance", "max_concurrent_chains", "parallel_islands", "task_description"},
                   s);
        RunConfig& r = c.engine;
        read(e, "n_islands", r.n_islands, s);
        read(e, "particles_per_island", r.particles_per_island, s);
        read(e, "n_proposals", r.n_proposals, s);
        read(e, "beta", r.beta, s);
        read(e, "kappa", r.kappa, s);
        read(e, "min_iterations", r.min_iterations, s);
        read(e, "max_iterations", r.max_iterations, s);
        read(e, "migration_interval", r.migration_interval, s);
        read(e, "migration_size", r.migration_size, s);
        read(e, "top_k_inspiration", r.top_k_inspiration, s);
        read(e, "diverse_inspirations", r.diverse_inspirations, s);
        read(e, "reward_floor", r.reward_floor, s);
        read(e, "seed", r.seed, s);
        read(e, "lambda_tolerance", r.lambda_tolerance, s);
        read(e, "max_concurrent_chains", r.max_concurrent_chains, s);
        read(e, "parallel_islands", r.parallel_islands, s);
        read(e, "task_description", r.task_description, s);
        std::string sel = kernel_selection_to_string(r.kernel_selection);
        read(e, "kernel_selection", sel, s);
        r.kernel_selection = parse_kernel_selection(sel);
        std::string acc = "reward_only";
        read(e, "acceptance_mode", acc, s);
        if (acc == "reward_only")
            r.acceptance_mode = AcceptanceMode::RewardOnly;
        else if (acc == "full_ratio")
            r.acceptance_mode = AcceptanceMode::FullRatio;
        else
            bad("engine.acceptance_mode must be reward_only or full_ratio");
    }
    c.engine.validate();

    if (doc.contains("prior")) {
        const auto& p = doc["prior"];
        const std::string s = "prior";
        check_keys(p, {"kind", "source", "source_file", "language", "n_bits"}, s);
        read(p, "kind", c.prior.kind, s);
        read(p, "language", c.prior.language, s);
        read(p, "source", c.prior.source, s);
        read(p, "n_bits", c.prior.n_bits, s);
        if (p.contains("source_file")) {
            if (p.contains("source")) bad("prior.source and prior.source_file are exclusive");
            const std::string file = resolve(p["source_file"].get<std::string>(), base_dir);
            std::ifstream in(file, std::ios::binary);
            if (!in) bad("cannot read prior.source_file " + file);
            c.prior.source.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
    }
    if (c.prior.kind == "seed_program") {
        if (c.prior.source.empty()) bad("prior.source (or source_file) is required for seed_program");
    } else if (c.prior.kind == "uniform_bitstring") {
        if (c.prior.n_bits < 1 || c.prior.n_bits > 64) bad("prior.n_bits must lie in [1, 64]");
    } else {
        bad("prior.kind must be seed_program or uniform_bitstring");
    }

    if (doc.contains("evaluator")) {
        const auto& v = doc["evaluator"];
        const std::string s = "evaluator";
        check_keys(v, {"kind", "command", "args", "timeout_ms", "file_name", "env_allow", "n_bits"}, s);
        read(v, "kind", c.evaluator.kind, s);
        read(v, "command", c.evaluator.spec.command, s);
        read(v, "args", c.evaluator.spec.args, s);
        read_ms(v, "timeout_ms", c.evaluator.spec.timeout, s);
        read(v, "file_name", c.evaluator.spec.file_name, s);
        read(v, "env_allow", c.evaluator.spec.env_allow, s);
        read(v, "n_bits", c.evaluator.n_bits, s);
    }
    c.evaluator.spec.reward_floor = c.engine.reward_floor;
    if (c.evaluator.kind == "subprocess") {
        if (c.evaluator.spec.command.empty()) bad("evaluator.command is required for subprocess evaluators");
        c.evaluator.spec.command = resolve_command(c.evaluator.spec.command, base_dir);
        for (auto& a : c.evaluator.spec.args)
            for (auto pos = a.find("{config_dir}"); pos != std::string::npos; pos = a.find("{config_dir}", pos))
                a.replace(pos, 12, fs::absolute(base_dir).string());
        if (c.evaluator.spec.file_name.empty() || c.evaluator.spec.file_name.find('/') != std::string::npos)
            bad("evaluator.file_name must be a plain file name");
    } else if (c.evaluator.kind == "bitstring") {
        if (c.evaluator.n_bits < 1 || c.evaluator.n_bits > 64) bad("evaluator.n_bits must lie in [1, 64]");
    } else {
        bad("evaluator.kind must be subprocess or bitstring");
    }

    if (doc.contains("proposal")) {
        check_keys(doc["proposal"], {"kind"}, "proposal");
        read(doc["proposal"], "kind", c.proposal_kind, "proposal");
    }
    if (c.proposal_kind != "llm" && c.proposal_kind != "bitflip") bad("proposal.kind must be llm or bitflip");
    if (c.engine.acceptance_mode == AcceptanceMode::FullRatio &&
        (c.proposal_kind != "bitflip" || c.prior.kind != "uniform_bitstring"))
        bad("full_ratio acceptance needs a density-known proposal and prior (bitflip + uniform_bitstring)");

    if (doc.contains("llm")) {
        const auto& l = doc["llm"];
        const std::string s = "llm";
        check_keys(l,
                   {"base_url", "path", "api_key_env", "models", "temperature", "max_tokens", "timeout_ms",
                    "max_retries", "initial_backoff_ms", "backoff_multiplier", "max_backoff_ms", "request_budget",
                    "lenient_trailing_whitespace"},
                   s);
        read(l, "base_url", c.llm.client.base_url, s);
        read(l, "path", c.llm.client.path, s);
        read(l, "api_key_env", c.llm.api_key_env, s);
        read(l, "temperature", c.llm.kernel.temperature, s);
        read(l, "max_tokens", c.llm.kernel.max_tokens, s);
        read_ms(l, "timeout_ms", c.llm.client.timeout, s);
        read(l, "max_retries", c.llm.client.retry.max_retries, s);
        read_ms(l, "initial_backoff_ms", c.llm.client.retry.initial_backoff, s);
        read(l, "backoff_multiplier", c.llm.client.retry.multiplier, s);
        read_ms(l, "max_backoff_ms", c.llm.client.retry.max_backoff, s);
        read(l, "request_budget", c.llm.client.request_budget, s);
        read(l, "lenient_trailing_whitespace", c.llm.kernel.diff.lenient_trailing_whitespace, s);
        if (l.contains("models")) {
            if (!l["models"].is_array() || l["models"].empty()) bad("llm.models must be a non-empty array");
            c.llm.kernel.models.clear();
            for (const auto& m : l["models"]) {
                check_keys(m, {"name", "weight"}, "llm.models[]");
                ModelChoice choice{"", 1.0};
                read(m, "name", choice.name, "llm.models[]");
                read(m, "weight", choice.weight, "llm.models[]");
                if (choice.name.empty()) bad("llm.models[].name is required");
                if (!(choice.weight > 0.0)) bad("llm.models[].weight must be > 0");
                c.llm.kernel.models.push_back(std::move(choice));
            }
        }
        if (c.llm.client.retry.max_retries < 0) bad("llm.max_retries must be >= 0");
        if (!(c.llm.client.retry.multiplier >= 1.0)) bad("llm.backoff_multiplier must be >= 1");
        if (c.llm.kernel.max_tokens < 1) bad("llm.max_tokens must be >= 1");
        if (!(c.llm.kernel.temperature >= 0.0)) bad("llm.temperature must be >= 0");
    }

    if (doc.contains("embedding")) {
        const auto& e = doc["embedding"];
        const std::string s = "embedding";
        check_keys(e, {"kind", "dim", "base_url", "path", "model", "api_key_env", "timeout_ms"}, s);
        read(e, "kind", c.embedding.kind, s);
        read(e, "dim", c.embedding.dim, s);
        read(e, "base_url", c.embedding.base_url, s);
        read(e, "path", c.embedding.path, s);
        read(e, "model", c.embedding.model, s);
        read(e, "api_key_env", c.embedding.api_key_env, s);
        read_ms(e, "timeout_ms", c.embedding.timeout, s);
    }
    if (c.embedding.kind != "hashed_trigram" && c.embedding.kind != "http")
        bad("embedding.kind must be hashed_trigram or http");
    if (c.embedding.dim == 0) bad("embedding.dim must be > 0");
    if (c.embedding.kind == "http" && c.embedding.base_url.empty()) bad("embedding.base_url is required for http");

    read(doc, "run_dir", c.run_dir, "config");
    c.run_dir = resolve(c.run_dir, base_dir);
    return c;
}

AppConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) bad("cannot open config file " + path.string());
    const auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) bad("config file " + path.string() + " is not valid JSON");
    return parse_config(doc, fs::absolute(path).parent_path());
}

json config_to_json(const AppConfig& c) {
    const RunConfig& r = c.engine;
    json models = json::array();
    for (const auto& m : c.llm.kernel.models) models.push_back({{"name", m.name}, {"weight", m.weight}});
    json prior = {{"kind", c.prior.kind}, {"language", c.prior.language}};
    if (c.prior.kind == "seed_program")
        prior["source"] = c.prior.source;
    else
        prior["n_bits"] = c.prior.n_bits;
    json evaluator = {{"kind", c.evaluator.kind}};
    if (c.evaluator.kind == "subprocess") {
        evaluator["command"] = c.evaluator.spec.command;
        evaluator["args"] = c.evaluator.spec.args;
        evaluator["timeout_ms"] = c.evaluator.spec.timeout.count();
        evaluator["file_name"] = c.evaluator.spec.file_name;
        evaluator["env_allow"] = c.evaluator.spec.env_allow;
    } else {
        evaluator["n_bits"] = c.evaluator.n_bits;
    }
    json out = {
        {"engine",
         {{"n_islands", r.n_islands},
          {"particles_per_island", r.particles_per_island},
          {"n_proposals", r.n_proposals},
          {"beta", r.beta},
          {"kappa", r.kappa},
          {"min_iterations", r.min_iterations},
          {"max_iterations", r.max_iterations},
          {"migration_interval", r.migration_interval},
          {"migration_size", r.migration_size},
          {"top_k_inspiration", r.top_k_inspiration},
          {"diverse_inspirations", r.diverse_inspirations},
          {"reward_floor", r.reward_floor},
          {"seed", r.seed},
          {"kernel_selection", kernel_selection_to_string(r.kernel_selection)},
          {"acceptance_mode", r.acceptance_mode == AcceptanceMode::FullRatio ? "full_ratio" : "reward_only"},
          {"lambda_tolerance", r.lambda_tolerance},
          {"max_concurrent_chains", r.max_concurrent_chains},
          {"parallel_islands", r.parallel_islands},
          {"task_description", r.task_description}}},
        {"prior", std::move(prior)},
        {"evaluator", std::move(evaluator)},
        {"proposal", {{"kind", c.proposal_kind}}},
        {"llm",
         {{"base_url", c.llm.client.base_url},
          {"path", c.llm.client.path},
          {"api_key_env", c.llm.api_key_env},
          {"models", std::move(models)},
          {"temperature", c.llm.kernel.temperature},
          {"max_tokens", c.llm.kernel.max_tokens},
          {"timeout_ms", c.llm.client.timeout.count()},
          {"max_retries", c.llm.client.retry.max_retries},
          {"initial_backoff_ms", c.llm.client.retry.initial_backoff.count()},
          {"backoff_multiplier", c.llm.client.retry.multiplier},
          {"max_backoff_ms", c.llm.client.retry.max_backoff.count()},
          {"request_budget", c.llm.client.request_budget},
          {"lenient_trailing_whitespace", c.llm.kernel.diff.lenient_trailing_whitespace}}},
        {"embedding",
         {{"kind", c.embedding.kind},
          {"dim", c.embedding.dim},
          {"base_url", c.embedding.base_url},
          {"path", c.embedding.path},
          {"model", c.embedding.model},
          {"api_key_env", c.embedding.api_key_env},
          {"timeout_ms", c.embedding.timeout.count()}}},
    };
    if (!c.run_dir.empty()) out["run_dir"] = c.run_dir;
    return out;
}

Program UniformBitstringPrior::sample(Rng& rng) const {
    std::string s(static_cast<std::size_t>(n_bits_), '0');
    for (auto& ch : s)
        if (rng.index(2) == 1) ch = '1';
    return Program(std::move(s), "bits");
}

std::optional<double> UniformBitstringPrior::density(const Program& program) const {
    const auto& s = program.source();
    if (s.size() != static_cast<std::size_t>(n_bits_)) return 0.0;
    for (char ch : s)
        if (ch != '0' && ch != '1') return 0.0;
    return std::ldexp(1.0, -n_bits_);
}

RuntimeComponents build_components(const AppConfig& config, std::shared_ptr<HttpTransport> transport) {
    RuntimeComponents rc;
    if (!transport) transport = std::make_shared<HttplibTransport>();

    if (config.prior.kind == "seed_program")
        rc.prior = std::make_unique<SeedProgramPrior>(Program(config.prior.source, config.prior.language));
    else
        rc.prior = std::make_unique<UniformBitstringPrior>(config.prior.n_bits);

    if (config.evaluator.kind == "subprocess")
        rc.evaluator = std::make_unique<SubprocessEvaluator>(config.evaluator.spec);
    else
        rc.evaluator = std::make_unique<BitstringEvaluator>(config.evaluator.n_bits, config.engine.reward_floor);

    if (config.proposal_kind == "llm") {
        ChatClientConfig client = config.llm.client;
        if (!config.llm.api_key_env.empty()) {
            const char* key = std::getenv(config.llm.api_key_env.c_str());
            if (key) client.api_key = key;
        }
        rc.api_key = client.api_key;
        rc.client = std::make_shared<ChatClient>(client, transport);
        rc.kernel = std::make_unique<LlmKernel>(rc.client, config.llm.kernel);
    } else {
        rc.kernel = std::make_unique<BitFlipKernel>();
    }

    if (config.embedding.kind == "http") {
        std::string key;
        if (!config.embedding.api_key_env.empty())
            if (const char* k = std::getenv(config.embedding.api_key_env.c_str())) key = k;
        rc.embedder = std::make_shared<HttpEmbeddingProvider>(config.embedding, key, transport);
    } else {
        rc.embedder = std::make_shared<HashedTrigramEmbedding>(config.embedding.dim);
    }
    return rc;
}

}  // namespace smcprog
