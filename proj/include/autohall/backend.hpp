#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "autohall/core_types.hpp"

namespace autohall {

// ---------------------------------------------------------------------------
// Requests and configuration
// ---------------------------------------------------------------------------

struct ChatRequest {
    std::string prompt;
    GenerationParams params;
    Purpose purpose = Purpose::Generation;
    /// Metadata for scripted-backend matching and artifact joinability.
    std::string claim_id;
};

enum class BackendKind { Http, Scripted };

struct RetryPolicy {
    std::uint32_t max_attempts = 4;
    std::uint32_t base_backoff_ms = 250;
};

struct BackendConfig {
    BackendKind kind = BackendKind::Scripted;
    std::string endpoint;  // Http: full URL of the chat-completions endpoint
    std::string model_id = "default";
    std::uint32_t max_concurrency = 4;
    RetryPolicy retry;
    std::string cache_dir;     // empty disables the replay cache
    std::string script_path;   // Scripted
    std::string token_env_var = "AUTOHALL_API_KEY";

    void validate() const {
        if (max_concurrency < 1) throw ConfigError("max_concurrency must be >= 1");
        if (retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
        if (kind == BackendKind::Http && endpoint.empty())
            throw ConfigError("http backend requires an endpoint");
        if (kind == BackendKind::Scripted && script_path.empty())
            throw ConfigError("scripted backend requires a script file");
    }
};

/// Deterministic digest over every field that makes two requests distinct
/// samples: model, temperature, template, prompt text, sample index, purpose.
inline std::string cache_key(const ChatRequest& req) {
    char temp[32];
    std::snprintf(temp, sizeof(temp), "%.6f", req.params.temperature);
    std::string canon;
    canon += req.params.model_id;
    canon += '\x1f';
    canon += temp;
    canon += '\x1f';
    canon += req.params.prompt_template_id;
    canon += '\x1f';
    canon += req.prompt;
    canon += '\x1f';
    canon += std::to_string(req.params.sample_index);
    canon += '\x1f';
    canon += to_string(req.purpose);
    // two independent passes to get a 128-bit name, cheap collision margin
    return fnv1a64_hex(canon) + fnv1a64_hex(canon + '\x1e');
}

namespace detail {

/// Counting semaphore with runtime capacity.
class ConcurrencyGate {
public:
    explicit ConcurrencyGate(std::uint32_t capacity) : available_(capacity) {}

    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
        ++in_flight_;
        peak_in_flight_ = std::max(peak_in_flight_, in_flight_);
    }

    void release() {
        std::lock_guard lock(mu_);
        ++available_;
        --in_flight_;
        cv_.notify_one();
    }

    std::uint32_t peak_in_flight() const {
        std::lock_guard lock(mu_);
        return peak_in_flight_;
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::uint32_t available_;
    std::uint32_t in_flight_ = 0;
    std::uint32_t peak_in_flight_ = 0;
};

struct GateGuard {
    ConcurrencyGate& gate;
    explicit GateGuard(ConcurrencyGate& g) : gate(g) { gate.acquire(); }
    ~GateGuard() { gate.release(); }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Backend contract: shared handle, concurrency bound, replayable disk cache
// ---------------------------------------------------------------------------

class Backend {
public:
    explicit Backend(BackendConfig config) : config_(std::move(config)), gate_(config_.max_concurrency) {
        config_.validate();
        if (!config_.cache_dir.empty()) std::filesystem::create_directories(config_.cache_dir);
    }
    virtual ~Backend() = default;

    /// Returns the model's reply text. Identical request keys replay from the
    /// cache without touching the transport. use_cache=false forces a fresh
    /// call (retry-after-unparseable policy); the fresh reply still lands in
    /// the cache.
    std::string complete(const ChatRequest& req, bool use_cache = true) {
        if (req.prompt.empty()) throw Error("empty prompt");
        const std::string key = cache_key(req);
        if (use_cache && !config_.cache_dir.empty()) {
            auto cached = read_cache(key);
            if (cached) return *cached;
        }
        std::string reply;
        {
            detail::GateGuard guard(gate_);
            reply = complete_uncached(req);
        }
        if (!config_.cache_dir.empty()) write_cache(key, reply);
        return reply;
    }

    const BackendConfig& config() const { return config_; }

    /// Number of transport-level completions actually performed (cache misses).
    std::uint64_t transport_calls() const { return transport_calls_.load(); }

    std::uint32_t peak_in_flight() const { return gate_.peak_in_flight(); }

protected:
    virtual std::string complete_uncached(const ChatRequest& req) = 0;

    void count_transport_call() { ++transport_calls_; }

    BackendConfig config_;

private:
    std::filesystem::path cache_path(const std::string& key) const {
        return std::filesystem::path(config_.cache_dir) / (key + ".txt");
    }

    std::optional<std::string> read_cache(const std::string& key) const {
        std::lock_guard lock(cache_mu_);
        auto p = cache_path(key);
        if (!std::filesystem::exists(p)) return std::nullopt;
        return read_file(p.string());
    }

    void write_cache(const std::string& key, const std::string& reply) {
        std::lock_guard lock(cache_mu_);
        auto p = cache_path(key);
        if (std::filesystem::exists(p)) return;  // append-only store
        auto tmp = p;
        tmp += ".tmp";
        write_file(tmp.string(), reply);
        std::filesystem::rename(tmp, p);
    }

    detail::ConcurrencyGate gate_;
    mutable std::mutex cache_mu_;
    std::atomic<std::uint64_t> transport_calls_{0};
};

// ---------------------------------------------------------------------------
// Scripted backend: deterministic fixture-driven replies
// ---------------------------------------------------------------------------

/// Script file: line-delimited records of
///   {"match": {"purpose"?, "claim_id"?, "sample_index"?, "prompt_contains"?}, "reply": "..."}
/// First matching record wins; a request nothing matches is a fixture bug and
/// raises ScriptMiss naming the request.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(BackendConfig config) : Backend(std::move(config)) {
        for (const auto& j : read_jsonl(config_.script_path)) {
            Rule rule;
            if (!j.contains("reply") || !j.contains("match"))
                throw ConfigError("script record needs 'match' and 'reply': " + j.dump());
            const json& m = j["match"];
            if (m.contains("purpose")) rule.purpose = purpose_from_string(m["purpose"].get<std::string>());
            if (m.contains("claim_id")) rule.claim_id = m["claim_id"].get<std::string>();
            if (m.contains("sample_index")) rule.sample_index = m["sample_index"].get<std::uint32_t>();
            if (m.contains("prompt_contains")) rule.prompt_contains = m["prompt_contains"].get<std::string>();
            rule.reply = j["reply"].get<std::string>();
            rules_.push_back(std::move(rule));
        }
    }

protected:
    std::string complete_uncached(const ChatRequest& req) override {
        count_transport_call();
        for (const auto& rule : rules_) {
            if (rule.purpose && *rule.purpose != req.purpose) continue;
            if (rule.claim_id && *rule.claim_id != req.claim_id) continue;
            if (rule.sample_index && *rule.sample_index != req.params.sample_index) continue;
            if (rule.prompt_contains && req.prompt.find(*rule.prompt_contains) == std::string::npos)
                continue;
            return rule.reply;
        }
        throw ScriptMiss("purpose=" + to_string(req.purpose) + " claim_id=" + req.claim_id +
                         " sample_index=" + std::to_string(req.params.sample_index));
    }

private:
    struct Rule {
        std::optional<Purpose> purpose;
        std::optional<std::string> claim_id;
        std::optional<std::uint32_t> sample_index;
        std::optional<std::string> prompt_contains;
        std::string reply;
    };
    std::vector<Rule> rules_;
};

}  // namespace autohall
