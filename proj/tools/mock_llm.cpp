#include "mock_llm.hpp"

#include <stdexcept>

#include "httplib.h"
#include "smcprog/core.hpp"

namespace smcprog::mock {

using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string message_content(const json& request, const std::string& role) {
    if (!request.contains("messages") || !request["messages"].is_array()) return {};
    for (const auto& m : request["messages"])
        if (m.value("role", "") == role && m.contains("content") && m["content"].is_string())
            return m["content"].get<std::string>();
    return {};
}

struct Fenced {
    std::string language;
    std::string body;
};

// First ``` block; the body excludes the newline before the closing fence.
std::optional<Fenced> first_fenced(const std::string& text) {
    const auto open = text.find("```");
    if (open == std::string::npos) return std::nullopt;
    const auto eol = text.find('\n', open);
    if (eol == std::string::npos) return std::nullopt;
    const auto close = text.find("\n```", eol);
    if (close == std::string::npos) return std::nullopt;
    return Fenced{text.substr(open + 3, eol - open - 3), text.substr(eol + 1, close - eol - 1)};
}

std::string line_around(const std::string& s, std::size_t pos) {
    const auto begin = s.rfind('\n', pos);
    const auto from = begin == std::string::npos ? 0 : begin + 1;
    const auto end = s.find('\n', pos);
    return s.substr(from, (end == std::string::npos ? s.size() : end) - from);
}

}  // namespace

std::string mock_edit(const std::string& source, std::uint64_t h) {
    const bool bits = !source.empty() && source.find_first_not_of("01") == std::string::npos;
    std::string out = source;
    if (bits) {
        const std::size_t i = h % source.size();
        out[i] = source[i] == '0' ? '1' : '0';
        return out;
    }
    std::vector<std::size_t> digits;
    for (std::size_t i = 0; i < source.size(); ++i)
        if (source[i] >= '0' && source[i] <= '9') digits.push_back(i);
    if (!digits.empty()) {
        const std::size_t i = digits[h % digits.size()];
        out[i] = static_cast<char>('0' + (source[i] - '0' + 1 + (h >> 32) % 9) % 10);
        return out;
    }
    return source + "\n# variant " + std::to_string(h % 1000);
}

std::string mock_reply(const json& request, const MockLlmOptions& options) {
    const std::string body = request.dump();
    const std::uint64_t h = mix(fnv1a64(body));
    if (static_cast<int>(h % 1000) < options.malformed_per_mille) return "I would rather describe the idea in prose.";

    const std::string system = message_content(request, "system");
    const auto parent = first_fenced(message_content(request, "user"));
    const std::string source = parent ? parent->body : std::string();
    const std::string language = parent ? parent->language : std::string();
    const std::string edited = mock_edit(source, mix(h));
    const std::string name = "<NAME>\nmock_edit_" + std::to_string(h % 10000) + "\n</NAME>\n\n";
    const std::string desc = "<DESCRIPTION>\nOne-character change.\n</DESCRIPTION>\n\n";

    if (system.find("<DIFF>") != std::string::npos) {
        std::size_t pos = 0;
        while (pos < source.size() && source[pos] == edited[pos]) ++pos;
        std::string search, replace;
        if (source.empty() || pos >= source.size()) {
            search = source.empty() ? "\n" : source;
            replace = edited;
        } else {
            search = line_around(source, pos);
            replace = line_around(edited, pos);
        }
        return name + desc + "<DIFF>\n<<<<<<< SEARCH\n" + search + "\n=======\n" + replace +
               "\n>>>>>>> REPLACE\n</DIFF>\n";
    }
    return name + desc + "<CODE>\n```" + language + "\n" + edited + "\n```\n</CODE>\n";
}

MockLlmServer::MockLlmServer(MockLlmOptions options) : options_(std::move(options)) {}

MockLlmServer::~MockLlmServer() { stop(); }

int MockLlmServer::start(const std::string& host, int port) {
    if (server_) throw std::logic_error("mock server already started");
    server_ = std::make_unique<httplib::Server>();
    server_->Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
        const std::int64_t n = ++requests_;
        if (!options_.api_key.empty() && req.get_header_value("Authorization") != "Bearer " + options_.api_key) {
            res.status = 401;
            res.set_content(R"({"error":{"message":"bad api key"}})", "application/json");
            return;
        }
        if (n <= options_.rate_limit_first) {
            res.status = 429;
            res.set_header("Retry-After", "0");
            res.set_content(R"({"error":{"message":"rate limited"}})", "application/json");
            return;
        }
        if (options_.outage_after >= 0 && n > options_.outage_after) {
            res.status = 503;
            res.set_content(R"({"error":{"message":"unavailable"}})", "application/json");
            return;
        }
        const json request = json::parse(req.body, nullptr, false);
        if (request.is_discarded()) {
            res.status = 400;
            res.set_content(R"({"error":{"message":"body is not JSON"}})", "application/json");
            return;
        }
        const json reply = {
            {"id", "mock-" + std::to_string(n)},
            {"object", "chat.completion"},
            {"model", request.value("model", "mock")},
            {"choices",
             {{{"index", 0},
               {"message", {{"role", "assistant"}, {"content", mock_reply(request, options_)}}},
               {"finish_reason", "stop"}}}},
        };
        res.set_content(reply.dump(), "application/json");
    });
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) {
        server_.reset();
        throw std::runtime_error("mock server could not bind " + host);
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void MockLlmServer::stop() {
    if (!server_) return;
    server_->stop();
    if (thread_.joinable()) thread_.join();
    server_.reset();
}

}  // namespace smcprog::mock
