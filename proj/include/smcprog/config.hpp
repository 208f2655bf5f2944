#pragma once

// Run configuration file (JSON). Top-level sections:
//
//   engine     RunConfig fields; kernel_selection is "adaptive", "uniform"
//              or "fixed:<kernel>", acceptance_mode "reward_only" or "full_ratio"
//   prior      {"kind": "seed_program", "source" | "source_file", "language"}
//              {"kind": "uniform_bitstring", "n_bits"}
//   evaluator  {"kind": "subprocess", "command", "args", "timeout_ms", "file_name", "env_allow"}
//              {"kind": "bitstring", "n_bits"}
//   proposal   {"kind": "llm"} or {"kind": "bitflip"}
//   llm        endpoint, models, sampling and retry settings; the API key is
//              read from the environment variable named by api_key_env
//   embedding  {"kind": "hashed_trigram", "dim"} or {"kind": "http", ...}
//   run_dir    optional default output directory
//
// Unknown keys are rejected. Relative paths resolve against the config file;
// evaluator args are passed verbatim except that "{config_dir}" expands to the
// config file's directory (evaluators run inside a fresh temporary directory).

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "smcprog/archive.hpp"
#include "smcprog/core.hpp"
#include "smcprog/eval.hpp"
#include "smcprog/island.hpp"
#include "smcprog/llm.hpp"

namespace smcprog {

struct PriorSettings {
    std::string kind = "seed_program";
    std::string source;
    std::string language = "python";
    int n_bits = 8;
};

struct EvaluatorSettings {
    std::string kind = "subprocess";
    EvalSpec spec;
    int n_bits = 8;
};

struct LlmSettings {
    ChatClientConfig client;  // api_key left empty; filled from api_key_env at build time
    std::string api_key_env;
    LlmKernelConfig kernel;
};

struct EmbeddingSettings {
    std::string kind = "hashed_trigram";
    std::size_t dim = 256;
    std::string base_url;
    std::string path = "/v1/embeddings";
    std::string model;
    std::string api_key_env;
    std::chrono::milliseconds timeout{60'000};
};

struct AppConfig {
    RunConfig engine;
    PriorSettings prior;
    EvaluatorSettings evaluator;
    std::string proposal_kind = "llm";
    LlmSettings llm;
    EmbeddingSettings embedding;
    std::string run_dir;
};

/// Throws Error(InvalidConfig) on schema or bound violations.
[[nodiscard]] AppConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
[[nodiscard]] AppConfig load_config(const std::filesystem::path& path);
/// Normalized form with every default spelled out; parse_config round-trips it.
[[nodiscard]] nlohmann::json config_to_json(const AppConfig& config);

[[nodiscard]] std::string kernel_selection_to_string(const KernelSelection& s);
[[nodiscard]] KernelSelection parse_kernel_selection(std::string_view text);

/// Live objects behind a config.
struct RuntimeComponents {
    std::unique_ptr<ProposalKernel> kernel;
    std::unique_ptr<Evaluator> evaluator;
    std::unique_ptr<PriorSampler> prior;
    std::shared_ptr<const EmbeddingProvider> embedder;
    std::shared_ptr<ChatClient> client;  // null unless proposal kind is llm
    std::string api_key;

    [[nodiscard]] EngineComponents view() const {
        return {kernel.get(), evaluator.get(), prior.get(), embedder};
    }
};

[[nodiscard]] RuntimeComponents build_components(const AppConfig& config,
                                                 std::shared_ptr<HttpTransport> transport = nullptr);

/// Uniform distribution over {0,1}^n strings; density 2^-n.
class UniformBitstringPrior final : public PriorSampler {
public:
    explicit UniformBitstringPrior(int n_bits) : n_bits_(n_bits) {}
    [[nodiscard]] Program sample(Rng& rng) const override;
    [[nodiscard]] std::optional<double> density(const Program& program) const override;
    [[nodiscard]] bool has_density() const override { return true; }

private:
    int n_bits_;
};

/// OpenAI-compatible embeddings endpoint: POST {"model", "input"} and read
/// data[0].embedding. Throws on transport failures or a dimension mismatch.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(EmbeddingSettings settings, std::string api_key, std::shared_ptr<HttpTransport> transport);
    [[nodiscard]] std::vector<double> embed(const Program& program) const override;
    [[nodiscard]] std::size_t dimension() const override { return settings_.dim; }

private:
    EmbeddingSettings settings_;
    std::string api_key_;
    std::shared_ptr<HttpTransport> transport_;
};

}  // namespace smcprog
