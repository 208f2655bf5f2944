#include "smcprog/config.hpp"
#include "smcprog/error.hpp"

namespace smcprog {

HttpEmbeddingProvider::HttpEmbeddingProvider(EmbeddingSettings settings, std::string api_key,
                                             std::shared_ptr<HttpTransport> transport)
    : settings_(std::move(settings)), api_key_(std::move(api_key)), transport_(std::move(transport)) {
    if (!transport_) transport_ = std::make_shared<HttplibTransport>();
    if (settings_.base_url.empty()) throw Error(ErrorCode::InvalidConfig, "embedding.base_url is required");
    if (settings_.dim == 0) throw Error(ErrorCode::InvalidConfig, "embedding.dim must be > 0");
}

std::vector<double> HttpEmbeddingProvider::embed(const Program& program) const {
    const nlohmann::json body = {{"model", settings_.model}, {"input", program.source()}};
    HttpHeaders headers = {{"Content-Type", "application/json"}};
    if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);
    const HttpResponse res = transport_->post(settings_.base_url, settings_.path, body.dump(), headers, settings_.timeout);
    if (res.status < 200 || res.status >= 300) throw HttpError(res.status, res.body.substr(0, 500));

    const auto doc = nlohmann::json::parse(res.body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("data") || !doc["data"].is_array() || doc["data"].empty() ||
        !doc["data"][0].contains("embedding") || !doc["data"][0]["embedding"].is_array())
        throw Error(ErrorCode::MalformedApiResponse, "embedding response lacks data[0].embedding");
    std::vector<double> v;
    for (const auto& x : doc["data"][0]["embedding"]) {
        if (!x.is_number()) throw Error(ErrorCode::MalformedApiResponse, "embedding entries must be numbers");
        v.push_back(x.get<double>());
    }
    if (v.size() != settings_.dim)
        throw Error(ErrorCode::MalformedApiResponse, "embedding has " + std::to_string(v.size()) +
                                                         " entries, expected " + std::to_string(settings_.dim));
    return v;
}

}  // namespace smcprog
