#pragma once

// Client for an external text-embedding service plus the offline fallback.
//
// Wire contract: POST <base>/embed with body {"text": "..."}; the reply is
// {"embedding": [d_t numbers], "model": "..."}.

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
// resolv.h defines _res, which breaks Eigen templates
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "prunekit/semantic.hpp"

namespace prunekit {

class ProviderError : public DataError {
public:
    explicit ProviderError(const std::string& what) : DataError(what) {}
};

struct ProviderConfig {
    std::string url;  // base URL, e.g. http://127.0.0.1:8080; empty reads PRUNEKIT_EMBED_URL
    bool offline = false;
    std::uint64_t embed_seed = kDefaultEmbedSeed;
    int timeout_ms = 5000;
    int retries = 2;  // extra attempts after the first
    int retry_backoff_ms = 100;
    int d_t = kTextDim;
};

inline std::string resolve_embed_url(const ProviderConfig& cfg) {
    if (!cfg.url.empty()) return cfg.url;
    if (const char* env = std::getenv("PRUNEKIT_EMBED_URL"); env != nullptr) return env;
    return {};
}

namespace detail {

// Splits "http://host:port/prefix" into the scheme-host-port part and the
// path prefix.
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    const auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

inline TextEmbedding parse_embed_reply(const std::string& body, int d_t) {
    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("embedding provider: malformed JSON reply: ") + e.what());
    }
    if (!reply.contains("embedding") || !reply["embedding"].is_array()) {
        throw ProviderError("embedding provider: reply has no 'embedding' array");
    }
    const auto& arr = reply["embedding"];
    if (static_cast<int>(arr.size()) != d_t) {
        throw DataError("embedding provider: expected width " + std::to_string(d_t) + ", got " +
                        std::to_string(arr.size()));
    }
    TextEmbedding e{Vector(d_t), false};
    for (int i = 0; i < d_t; ++i) {
        if (!arr[static_cast<std::size_t>(i)].is_number()) {
            throw ProviderError("embedding provider: non-numeric embedding entry");
        }
        e.data[i] = arr[static_cast<std::size_t>(i)].get<double>();
    }
    require_finite(e.data, "embedding provider reply");
    e.unit_norm = std::abs(e.data.norm() - 1.0) <= 1e-6;
    return e;
}

}  // namespace detail

/// Embeds a prompt with the offline embedder or the HTTP provider. Transport
/// failures and non-200 replies are retried cfg.retries times and then raised
/// as ProviderError; a reply of the wrong width is raised immediately.
inline TextEmbedding embed_text(const TextPrompt& prompt, const ProviderConfig& cfg) {
    if (cfg.offline) return offline_embed(prompt, cfg.embed_seed, cfg.d_t);
    const std::string url = resolve_embed_url(cfg);
    if (url.empty()) {
        throw UsageError("no text-embedding source: pass --offline-embed, --embed-url or set PRUNEKIT_EMBED_URL");
    }
    const auto [host, prefix] = detail::split_url(url);
    httplib::Client client(host);
    const auto timeout = std::chrono::milliseconds(cfg.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    const std::string body = nlohmann::json{{"text", prompt.text}}.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg.retry_backoff_ms));
        auto res = client.Post(prefix + "/embed", body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        return detail::parse_embed_reply(res->body, cfg.d_t);
    }
    throw ProviderError("embedding provider at " + url + " failed after " + std::to_string(cfg.retries + 1) +
                        " attempts (" + last_error + ")");
}

}  // namespace prunekit
