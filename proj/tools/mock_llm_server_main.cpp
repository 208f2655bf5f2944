// Serves the deterministic mock chat endpoint until interrupted.

#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "mock_llm.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
}

int main(int argc, char** argv) {
    CLI::App app{"Deterministic OpenAI-compatible mock chat endpoint"};
    std::string host = "127.0.0.1";
    int port = 0;
    smcprog::mock::MockLlmOptions options;
    app.add_option("--host", host, "Bind address");
    app.add_option("--port", port, "Port; 0 picks a free one");
    app.add_option("--malformed-per-mille", options.malformed_per_mille, "Untagged replies per thousand")
        ->check(CLI::Range(0, 1000));
    app.add_option("--rate-limit-first", options.rate_limit_first, "Answer the first N requests with 429");
    app.add_option("--outage-after", options.outage_after, "Answer requests after the first N with 503");
    app.add_option("--api-key", options.api_key, "Require this bearer token");
    CLI11_PARSE(app, argc, argv);

    std::signal(SIGINT, [](int) { g_stop = 1; });
    std::signal(SIGTERM, [](int) { g_stop = 1; });
    smcprog::mock::MockLlmServer server(options);
    try {
        server.start(host, port);
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
    std::cout << "listening on http://" << host << ":" << server.port() << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}
