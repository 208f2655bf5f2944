#pragma once

// LLM proposal backend: prompt rendering, tagged-response parsing, the
// SEARCH/REPLACE applier, and an OpenAI-compatible chat client.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "smcprog/error.hpp"
#include "smcprog/mutate.hpp"

namespace smcprog {

// ---------------------------------------------------------------- templates

struct PromptTemplate {
    std::string_view system;
    std::string_view user;
};

/// Templates compiled in from templates/<kernel>.{system,user}.txt.
[[nodiscard]] PromptTemplate prompt_template(KernelId kernel);

struct RenderedPrompt {
    std::string system;
    std::string user;
};

/// Fills {{language}}, {{code_content}}, {{performance_metrics}} and
/// {{inspiration_section}}. Empty metrics render as "n/a".
[[nodiscard]] RenderedPrompt render_prompt(KernelId kernel, const Program& parent, std::string_view metrics,
                                           const std::vector<Inspiration>& inspirations);

[[nodiscard]] std::string format_metrics(const RewardValue& reward);
[[nodiscard]] std::string format_inspirations(const std::vector<Inspiration>& inspirations,
                                              std::string_view language);

// ------------------------------------------------------------------ parsing

struct DiffEdit {
    std::string search;
    std::string replace;
};

struct ParsedResponse {
    std::string name;
    std::string description;
    std::variant<std::vector<DiffEdit>, std::string> payload;  // edits, or full code

    [[nodiscard]] bool is_diff() const noexcept { return payload.index() == 0; }
    [[nodiscard]] const std::vector<DiffEdit>& edits() const { return std::get<0>(payload); }
    [[nodiscard]] const std::string& code() const { return std::get<1>(payload); }
};

enum class ExpectedPayload { Diff, Code };

/// Throws Error(MissingTag | MalformedDiffBlock | EmptyCode).
[[nodiscard]] ParsedResponse parse_response(std::string_view raw, ExpectedPayload expect);

/// Lower-case, spaces to underscores, drop everything outside [a-z0-9_].
[[nodiscard]] std::string normalize_edit_name(std::string_view name);

struct DiffOptions {
    /// Ignore trailing spaces/tabs at line ends when matching.
    bool lenient_trailing_whitespace = false;
};

/// Applies edits in order; each SEARCH must occur exactly once in the text
/// produced by the previous edits. Throws Error(NoMatch | AmbiguousMatch | NoOpEdit).
[[nodiscard]] std::string apply_diff(std::string_view source, const std::vector<DiffEdit>& edits,
                                     const DiffOptions& options = {});

// --------------------------------------------------------------- transport

/// Non-2xx final status from the chat endpoint.
class HttpError : public Error {
public:
    HttpError(int status, const std::string& message);
    [[nodiscard]] int status() const noexcept { return status_; }

private:
    int status_;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    /// Throws Error(TransportError) when no HTTP response was obtained.
    virtual HttpResponse post(const std::string& base_url, const std::string& path, const std::string& body,
                              const HttpHeaders& headers, std::chrono::milliseconds timeout) = 0;
};

/// cpp-httplib backed transport.
class HttplibTransport final : public HttpTransport {
public:
    HttpResponse post(const std::string& base_url, const std::string& path, const std::string& body,
                      const HttpHeaders& headers, std::chrono::milliseconds timeout) override;
};

// ------------------------------------------------------------------- client

struct ChatRequest {
    std::string model;
    std::string system;
    std::string user;
    double temperature = 1.0;
    int max_tokens = 4096;
};

struct RetryPolicy {
    int max_retries = 4;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{30'000};

    /// Delay before retry number `retry` (1-based).
    [[nodiscard]] std::chrono::milliseconds delay(int retry) const;
};

struct ChatClientConfig {
    std::string base_url = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string api_key;  // sent as a bearer token when non-empty
    std::chrono::milliseconds timeout{120'000};
    RetryPolicy retry{};
    /// Maximum number of chat() calls for the lifetime of the client; < 0 = unlimited.
    std::int64_t request_budget = -1;
};

struct AttemptRecord {
    int attempt = 0;
    int status = 0;  // 0 when the transport failed
    std::string error;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

class ChatClient {
public:
    ChatClient(ChatClientConfig config, std::shared_ptr<HttpTransport> transport, Sleeper sleeper = {});

    /// Returns choices[0].message.content. Retries 429, 5xx and transport
    /// failures with exponential backoff. Throws Error(BudgetExhausted |
    /// TransportError | HttpStatusError | MalformedApiResponse).
    std::string chat(const ChatRequest& request);

    [[nodiscard]] std::int64_t requests_issued() const noexcept { return issued_.load(); }
    [[nodiscard]] std::vector<AttemptRecord> attempts() const;
    /// Set the number of calls already consumed (used when resuming a run).
    void set_consumed(std::int64_t calls) noexcept;

    [[nodiscard]] static std::string build_body(const ChatRequest& request);
    [[nodiscard]] static std::string extract_content(const std::string& body);

private:
    ChatClientConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    Sleeper sleeper_;
    std::atomic<std::int64_t> issued_{0};
    mutable std::mutex attempts_mutex_;
    std::vector<AttemptRecord> attempts_;
};

// ------------------------------------------------------------------- kernel

struct ModelChoice {
    std::string name;
    double weight = 1.0;
};

struct LlmKernelConfig {
    std::vector<ModelChoice> models{{"gpt-5-mini", 0.5}, {"gemini-3-flash", 0.5}};
    double temperature = 1.0;
    int max_tokens = 4096;
    DiffOptions diff{};
};

/// Black-box proposal: render the kernel's prompt, ask a model drawn from the
/// ensemble, parse, and materialize the candidate. Malformed output becomes a
/// failed proposal; backend outages propagate.
class LlmKernel final : public ProposalKernel {
public:
    LlmKernel(std::shared_ptr<ChatClient> client, LlmKernelConfig config);

    [[nodiscard]] ProposalResult propose(const Program& parent, const MutationContext& context,
                                         Rng& rng) const override;

    /// Ensemble routing: categorical draw over model weights.
    [[nodiscard]] const std::string& pick_model(Rng& rng) const;

private:
    std::shared_ptr<ChatClient> client_;
    LlmKernelConfig config_;
};

}  // namespace smcprog
