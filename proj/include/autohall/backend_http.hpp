#pragma once

#include <cstdlib>
#include <string>

#include <httplib.h>

#include "autohall/backend.hpp"

namespace autohall {

/// Chat-completion HTTP client in the de-facto open API shape:
/// POST {model, messages, temperature}; reply = first choice's message content.
/// Retries transport failures and 429/5xx with exponential backoff, honoring
/// Retry-After when the server sends one.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(BackendConfig config) : Backend(std::move(config)) {
        parse_endpoint(config_.endpoint);
        if (const char* tok = std::getenv(config_.token_env_var.c_str())) token_ = tok;
    }

protected:
    std::string complete_uncached(const ChatRequest& req) override {
        json body{{"model", config_.model_id},
                  {"messages", json::array({json{{"role", "user"}, {"content", req.prompt}}})},
                  {"temperature", req.params.temperature}};
        const std::string payload = body.dump();

        std::string last_error;
        for (std::uint32_t attempt = 0; attempt < config_.retry.max_attempts; ++attempt) {
            if (attempt > 0) backoff(attempt, last_retry_after_ms_);
            last_retry_after_ms_ = 0;

            httplib::Client client(base_url_);
            client.set_connection_timeout(10, 0);
            client.set_read_timeout(120, 0);
            httplib::Headers headers;
            if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

            count_transport_call();
            auto res = client.Post(path_, headers, payload, "application/json");
            if (!res) {
                last_error = "connection failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429) {
                last_retry_after_ms_ = retry_after_ms(*res);
                last_error = "rate limited (429)";
                continue;
            }
            if (res->status >= 500) {
                last_error = "server error (" + std::to_string(res->status) + ")";
                continue;
            }
            if (res->status != 200)
                throw TransportError("http " + std::to_string(res->status) + ": " + res->body);
            return extract_reply(res->body);
        }
        if (last_error == "rate limited (429)")
            throw RateLimited(static_cast<int>(last_retry_after_ms_ / 1000));
        throw TransportError("retries exhausted: " + last_error);
    }

private:
    void parse_endpoint(const std::string& url) {
        auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw ConfigError("endpoint must be a full URL: " + url);
        auto path_start = url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            base_url_ = url;
            path_ = "/";
        } else {
            base_url_ = url.substr(0, path_start);
            path_ = url.substr(path_start);
        }
    }

    static std::string extract_reply(const std::string& body) {
        json j = json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
            throw TransportError("malformed completion response: " + body);
        const json& msg = j["choices"][0];
        if (msg.contains("message") && msg["message"].contains("content"))
            return msg["message"]["content"].get<std::string>();
        if (msg.contains("text")) return msg["text"].get<std::string>();
        throw TransportError("completion response lacks message content: " + body);
    }

    static std::uint64_t retry_after_ms(const httplib::Response& res) {
        if (res.has_header("Retry-After")) {
            try {
                return static_cast<std::uint64_t>(std::stoul(res.get_header_value("Retry-After"))) * 1000;
            } catch (...) {
            }
        }
        return 0;
    }

    void backoff(std::uint32_t attempt, std::uint64_t hint_ms) const {
        std::uint64_t ms = hint_ms > 0
                               ? hint_ms
                               : static_cast<std::uint64_t>(config_.retry.base_backoff_ms) << (attempt - 1);
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    }

    std::string base_url_;
    std::string path_;
    std::string token_;
    std::uint64_t last_retry_after_ms_ = 0;
};

inline std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    if (config.kind == BackendKind::Http) return std::make_unique<HttpBackend>(config);
    return std::make_unique<ScriptedBackend>(config);
}

}  // namespace autohall
