#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "sc2/errors.hpp"
#include "sc2/rng.hpp"
#include "sc2/text.hpp"

namespace sc2 {

/// Which sub-model a generation call belongs to. Drives prompt selection,
/// decoding defaults, and per-role cost accounting.
enum class Role { Aspect, Comparison, Comparator, Preference };

inline constexpr int kRoleCount = 4;

inline const char* to_string(Role r) {
    switch (r) {
        case Role::Aspect: return "aspect";
        case Role::Comparison: return "comparison";
        case Role::Comparator: return "comparator";
        case Role::Preference: return "preference";
    }
    return "unknown";
}

struct GenerationRequest {
    Role role = Role::Preference;
    std::string prompt;
    double temperature = 0.0;
    int max_decode_tokens = 1024;
    int sample_count = 1;
    std::string model_id;
    /// Offset applied to per-sample cache keys. Re-draws use a fresh base so
    /// they do not read back the response they are replacing.
    int sample_index_base = 0;
};

inline void validate_request(const GenerationRequest& req) {
    if (req.prompt.empty()) throw ValidationError("generation request: prompt must be non-empty");
    if (req.sample_count < 1) throw ValidationError("generation request: sample_count must be >= 1");
    if (req.max_decode_tokens < 1)
        throw ValidationError("generation request: max_decode_tokens must be >= 1");
    if (req.temperature < 0.0) throw ValidationError("generation request: temperature must be >= 0");
}

/// Usage counters for one role (or one call, as a delta). `calls` counts
/// logical serves — per sample, whether the text came from the backend or
/// the cache — so reports are identical between cold and warm-cache runs.
/// `backend_calls + cache_hits == calls` always.
struct RoleUsage {
    long calls = 0;
    long backend_calls = 0;
    long cache_hits = 0;
    long prompt_tokens = 0;
    long decoded_tokens = 0;

    RoleUsage& operator+=(const RoleUsage& o) {
        calls += o.calls;
        backend_calls += o.backend_calls;
        cache_hits += o.cache_hits;
        prompt_tokens += o.prompt_tokens;
        decoded_tokens += o.decoded_tokens;
        return *this;
    }
    bool operator==(const RoleUsage&) const = default;
};

/// Point-in-time copy of the ledger: one RoleUsage per role plus a total.
struct UsageSnapshot {
    std::array<RoleUsage, kRoleCount> per_role{};

    RoleUsage& operator[](Role r) { return per_role[static_cast<size_t>(r)]; }
    const RoleUsage& operator[](Role r) const { return per_role[static_cast<size_t>(r)]; }

    RoleUsage total() const {
        RoleUsage t;
        for (const RoleUsage& u : per_role) t += u;
        return t;
    }

    UsageSnapshot& operator+=(const UsageSnapshot& o) {
        for (size_t i = 0; i < per_role.size(); ++i) per_role[i] += o.per_role[i];
        return *this;
    }
    bool operator==(const UsageSnapshot&) const = default;
};

inline nlohmann::json usage_to_json(const UsageSnapshot& usage) {
    nlohmann::json roles = nlohmann::json::object();
    for (int i = 0; i < kRoleCount; ++i) {
        const RoleUsage& u = usage.per_role[static_cast<size_t>(i)];
        roles[to_string(static_cast<Role>(i))] = {
            {"calls", u.calls},
            {"prompt_tokens", u.prompt_tokens},
            {"decoded_tokens", u.decoded_tokens},
        };
    }
    RoleUsage t = usage.total();
    return nlohmann::json{
        {"roles", roles},
        {"total", {{"calls", t.calls}, {"prompt_tokens", t.prompt_tokens}, {"decoded_tokens", t.decoded_tokens}}},
    };
}

/// Thread-safe, monotonically growing usage accounting.
class UsageLedger {
public:
    void record(Role role, const RoleUsage& delta) {
        std::lock_guard<std::mutex> lock(mutex_);
        data_[role] += delta;
    }

    UsageSnapshot snapshot() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return data_;
    }

private:
    mutable std::mutex mutex_;
    UsageSnapshot data_;
};

struct GenerationResponse {
    std::vector<std::string> texts;
    long prompt_tokens = 0;                // per call (per sample)
    std::vector<long> decoded_tokens;      // one entry per sample
    /// Usage delta attributable to this one request; lets callers build exact
    /// per-item cost records without diffing the shared ledger.
    RoleUsage usage;
};

/// Anything that can turn a prompt into sampled texts.
class Backend {
public:
    virtual ~Backend() = default;
    virtual GenerationResponse generate(const GenerationRequest& request) = 0;
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

/// A scripted response rule: matches on role and/or prompt substrings, serves
/// canned texts from a finite queue. Rules are tried in order; first match
/// with a non-empty queue requirement wins (an exhausted matching rule is an
/// error, not a fall-through, so scripts fail loudly when counts are off).
struct MockRule {
    std::optional<Role> role;
    std::vector<std::string> prompt_contains;  // all substrings must appear
    std::vector<std::string> responses;

    bool matches(const GenerationRequest& req) const {
        if (role && *role != req.role) return false;
        for (const std::string& needle : prompt_contains) {
            if (!text::contains(req.prompt, needle)) return false;
        }
        return true;
    }
};

struct MockScript {
    std::vector<MockRule> rules;
    std::optional<std::string> default_response;  // unlimited supply

    static MockScript from_json(const nlohmann::json& j);
    static MockScript load(const std::filesystem::path& path);
};

inline Role role_from_string(std::string_view s) {
    std::string v = text::lower_ascii(text::trim(s));
    if (v == "aspect") return Role::Aspect;
    if (v == "comparison") return Role::Comparison;
    if (v == "comparator") return Role::Comparator;
    if (v == "preference") return Role::Preference;
    throw ConfigError("unknown role: " + std::string(s));
}

inline MockScript MockScript::from_json(const nlohmann::json& j) {
    MockScript script;
    const nlohmann::json* rules = &j;
    if (j.is_object()) {
        if (j.contains("default_response")) script.default_response = j.at("default_response").get<std::string>();
        if (j.contains("rules")) rules = &j.at("rules");
    }
    if (!rules->is_array()) throw ConfigError("mock script: expected a JSON list of rules");
    for (const nlohmann::json& jr : *rules) {
        MockRule rule;
        if (jr.contains("role") && !jr.at("role").is_null())
            rule.role = role_from_string(jr.at("role").get<std::string>());
        if (jr.contains("prompt_contains")) {
            const nlohmann::json& pc = jr.at("prompt_contains");
            if (pc.is_string()) {
                rule.prompt_contains.push_back(pc.get<std::string>());
            } else if (pc.is_array()) {
                for (const nlohmann::json& s : pc) rule.prompt_contains.push_back(s.get<std::string>());
            } else {
                throw ConfigError("mock script: prompt_contains must be a string or list of strings");
            }
        }
        rule.responses = jr.at("responses").get<std::vector<std::string>>();
        script.rules.push_back(std::move(rule));
    }
    return script;
}

inline MockScript MockScript::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock script: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("mock script " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

/// Deterministic scripted backend. Token counts are whitespace-delimited
/// words — a documented approximation, good enough for cost-shape tests.
class MockBackend : public Backend {
public:
    explicit MockBackend(MockScript script) : script_(std::move(script)) {
        queues_.reserve(script_.rules.size());
        for (const MockRule& rule : script_.rules)
            queues_.emplace_back(rule.responses.begin(), rule.responses.end());
    }

    GenerationResponse generate(const GenerationRequest& request) override {
        validate_request(request);
        std::lock_guard<std::mutex> lock(mutex_);
        GenerationResponse resp;
        resp.prompt_tokens = text::count_ws_tokens(request.prompt);
        for (int s = 0; s < request.sample_count; ++s) {
            resp.texts.push_back(next_text(request));
        }
        for (const std::string& t : resp.texts) resp.decoded_tokens.push_back(text::count_ws_tokens(t));
        return resp;
    }

    std::string name() const override { return "mock"; }

private:
    std::string next_text(const GenerationRequest& request) {
        for (size_t i = 0; i < script_.rules.size(); ++i) {
            if (!script_.rules[i].matches(request)) continue;
            if (queues_[i].empty())
                throw MockError("mock rule " + std::to_string(i) + " (role " +
                                to_string(request.role) + ") exhausted its response queue");
            std::string out = std::move(queues_[i].front());
            queues_[i].pop_front();
            return out;
        }
        if (script_.default_response) return *script_.default_response;
        throw MockError(std::string("no mock rule matches request (role ") +
                        to_string(request.role) + ") and no default response is set");
    }

    MockScript script_;
    std::vector<std::deque<std::string>> queues_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Live backend (OpenAI-compatible chat completions)
// ---------------------------------------------------------------------------

/// Construction lives in live_backend.hpp, kept out of the default include
/// path so the HTTP dependency is only compiled into binaries that want it.
struct LiveBackendConfig {
    std::string base_url;   // e.g. https://api.example.com/v1
    std::string api_key;
    int max_retries = 3;    // TransportError retry budget
    int connect_timeout_sec = 15;
    int read_timeout_sec = 120;
};

// ---------------------------------------------------------------------------
// Content digests and cache
// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

/// Content key for one sample of one request. Equal requests yield equal
/// keys; any change to model, role, prompt, decoding parameters, or sample
/// index yields a different key.
inline std::string cache_key(const GenerationRequest& request, int sample_index) {
    std::ostringstream material;
    material << request.model_id << '\x1f' << to_string(request.role) << '\x1f'
             << request.prompt << '\x1f';
    material.precision(17);
    material << request.temperature << '\x1f' << request.max_decode_tokens << '\x1f'
             << (request.sample_index_base + sample_index);
    return sha256_hex(material.str());
}

/// One file per key under the cache directory; filename is the hex digest,
/// content is canonical JSON echoing the request plus the sampled text.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    struct Entry {
        std::string text;
        long prompt_tokens = 0;
        long decoded_tokens = 0;
    };

    std::optional<Entry> lookup(const std::string& key) const {
        std::filesystem::path p = dir_ / (key + ".json");
        std::ifstream in(p);
        if (!in) return std::nullopt;
        try {
            nlohmann::json j;
            in >> j;
            Entry e;
            e.text = j.at("text").get<std::string>();
            e.prompt_tokens = j.at("prompt_tokens").get<long>();
            e.decoded_tokens = j.at("decoded_tokens").get<long>();
            return e;
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;  // unreadable entry behaves like a miss
        }
    }

    void store(const std::string& key, const GenerationRequest& request, int sample_index,
               const Entry& entry) const {
        nlohmann::json j{
            {"request",
             {{"model_id", request.model_id},
              {"role", to_string(request.role)},
              {"temperature", request.temperature},
              {"max_decode_tokens", request.max_decode_tokens},
              {"sample_index", request.sample_index_base + sample_index},
              {"prompt_sha256", sha256_hex(request.prompt)}}},
            {"text", entry.text},
            {"prompt_tokens", entry.prompt_tokens},
            {"decoded_tokens", entry.decoded_tokens},
        };
        std::filesystem::path tmp = dir_ / (key + ".tmp");
        std::filesystem::path final_path = dir_ / (key + ".json");
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << j.dump(2) << '\n';
        }
        // rename is atomic per key; identical content makes last-write-wins safe
        std::filesystem::rename(tmp, final_path);
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Provider: composition of backend + cache + ledger
// ---------------------------------------------------------------------------

struct ProviderOptions {
    std::string model_id = "mock";
    std::optional<std::filesystem::path> cache_dir;
    /// When true (the default), a request with sample_count = k is billed as
    /// k calls, matching per-sample accounting of total LLM calls. Set false
    /// for backends that bill one call per batched request.
    bool bill_per_sample = true;
};

/// The generation session all pipeline code talks to. Safe for concurrent
/// calls; the ledger aggregates across threads while each response carries
/// its own usage delta for per-item accounting.
class Provider {
public:
    Provider(std::shared_ptr<Backend> backend, ProviderOptions options = {})
        : backend_(std::move(backend)), options_(std::move(options)) {
        if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
    }

    GenerationResponse generate(GenerationRequest request) {
        if (request.model_id.empty()) request.model_id = options_.model_id;
        validate_request(request);
        const long billed = options_.bill_per_sample ? request.sample_count : 1;

        if (cache_) {
            std::vector<ResponseCache::Entry> entries;
            entries.reserve(static_cast<size_t>(request.sample_count));
            bool all_hit = true;
            for (int s = 0; s < request.sample_count && all_hit; ++s) {
                auto hit = cache_->lookup(cache_key(request, s));
                if (hit) {
                    entries.push_back(*hit);
                } else {
                    all_hit = false;
                }
            }
            if (all_hit) {
                GenerationResponse resp;
                resp.prompt_tokens = entries.empty() ? 0 : entries.front().prompt_tokens;
                for (ResponseCache::Entry& e : entries) {
                    resp.texts.push_back(std::move(e.text));
                    resp.decoded_tokens.push_back(e.decoded_tokens);
                }
                finalize_usage(resp, request, billed, /*backend_calls=*/0);
                return resp;
            }
        }

        GenerationResponse resp = backend_->generate(request);
        if (resp.texts.size() != static_cast<size_t>(request.sample_count))
            throw GenerationError("backend returned " + std::to_string(resp.texts.size()) +
                                  " texts for sample_count " + std::to_string(request.sample_count));
        if (cache_) {
            for (int s = 0; s < request.sample_count; ++s) {
                ResponseCache::Entry e{resp.texts[static_cast<size_t>(s)], resp.prompt_tokens,
                                       resp.decoded_tokens[static_cast<size_t>(s)]};
                cache_->store(cache_key(request, s), request, s, e);
            }
        }
        finalize_usage(resp, request, billed, billed);
        return resp;
    }

    UsageSnapshot ledger_snapshot() const { return ledger_.snapshot(); }

    const std::string& model_id() const { return options_.model_id; }
    bool has_cache() const { return cache_.has_value(); }

private:
    void finalize_usage(GenerationResponse& resp, const GenerationRequest& request, long billed,
                        long backend_calls) {
        RoleUsage u;
        u.calls = billed;
        u.backend_calls = backend_calls;
        u.cache_hits = billed - backend_calls;
        u.prompt_tokens = resp.prompt_tokens * billed;
        for (long d : resp.decoded_tokens) u.decoded_tokens += d;
        resp.usage = u;
        ledger_.record(request.role, u);
    }

    std::shared_ptr<Backend> backend_;
    ProviderOptions options_;
    std::optional<ResponseCache> cache_;
    UsageLedger ledger_;
};

/// Decoding defaults per role. Comparison sampling needs diversity; the
/// comparator and preference calls should be near-deterministic.
inline double default_temperature(Role role) {
    switch (role) {
        case Role::Comparison: return 0.7;
        case Role::Aspect: return 0.7;
        case Role::Comparator: return 0.0;
        case Role::Preference: return 0.0;
    }
    return 0.0;
}

inline int default_max_decode_tokens(Role role) {
    switch (role) {
        case Role::Aspect: return 256;
        case Role::Comparison: return 1024;
        case Role::Comparator: return 512;
        case Role::Preference: return 1024;
    }
    return 1024;
}

inline GenerationRequest make_request(Role role, std::string prompt, int sample_count = 1) {
    GenerationRequest req;
    req.role = role;
    req.prompt = std::move(prompt);
    req.temperature = default_temperature(role);
    req.max_decode_tokens = default_max_decode_tokens(role);
    req.sample_count = sample_count;
    return req;
}

} // namespace sc2
