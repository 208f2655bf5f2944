#pragma once

// Deterministic OpenAI-compatible chat endpoint for tests and offline runs.
// The reply depends only on the request body: the mock finds the first fenced
// block of the user message (the parent program) and makes one small edit,
// answering in DIFF or CODE form according to the system prompt.

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>

#include "json.hpp"

namespace httplib {
class Server;
}

namespace smcprog::mock {

struct MockLlmOptions {
    /// Replies without any tagged section, per thousand requests.
    int malformed_per_mille = 50;
    /// The first N requests get HTTP 429.
    int rate_limit_first = 0;
    /// Requests after the first N get HTTP 503; < 0 disables.
    std::int64_t outage_after = -1;
    /// When non-empty, requests must carry "Authorization: Bearer <api_key>".
    std::string api_key;
};

/// Assistant message content for a chat-completions request body.
[[nodiscard]] std::string mock_reply(const nlohmann::json& request, const MockLlmOptions& options);

/// Edits one character of `source` chosen by `h`: a bit flip for 0/1 strings,
/// otherwise a digit change, otherwise an appended comment line.
[[nodiscard]] std::string mock_edit(const std::string& source, std::uint64_t h);

class MockLlmServer {
public:
    explicit MockLlmServer(MockLlmOptions options = {});
    ~MockLlmServer();
    MockLlmServer(const MockLlmServer&) = delete;
    MockLlmServer& operator=(const MockLlmServer&) = delete;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();

    [[nodiscard]] int port() const noexcept { return port_; }
    [[nodiscard]] std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    [[nodiscard]] std::int64_t requests() const noexcept { return requests_.load(); }

private:
    MockLlmOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<std::int64_t> requests_{0};
    int port_ = 0;
};

}  // namespace smcprog::mock
