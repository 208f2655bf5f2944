#include "httplib.h"
#include "smcprog/error.hpp"
#include "smcprog/llm.hpp"

namespace smcprog {

HttpResponse HttplibTransport::post(const std::string& base_url, const std::string& path, const std::string& body,
                                    const HttpHeaders& headers, std::chrono::milliseconds timeout) {
    httplib::Client client(base_url);
    if (!client.is_valid()) throw Error(ErrorCode::TransportError, "unsupported endpoint URL: " + base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    client.set_read_timeout(secs.count(), static_cast<time_t>(usecs.count()));
    client.set_write_timeout(secs.count(), static_cast<time_t>(usecs.count()));

    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
        if (k == "Content-Type")
            content_type = v;
        else
            h.emplace(k, v);
    }
    auto res = client.Post(path, h, body, content_type);
    if (!res) throw Error(ErrorCode::TransportError, httplib::to_string(res.error()));
    return {res->status, res->body};
}

}  // namespace smcprog
