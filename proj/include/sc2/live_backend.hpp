#pragma once

#include <memory>
#include <string>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <json.hpp>

#include "sc2/provider.hpp"

namespace sc2 {

/// OpenAI-compatible chat-completions client. Transport failures are retried
/// with jittered exponential backoff; quota/auth rejections are not.
class LiveBackend : public Backend {
public:
    explicit LiveBackend(LiveBackendConfig config) : config_(std::move(config)) {
        if (config_.base_url.empty())
            throw ConfigError("live backend: base_url must be set (PROVIDER_BASE_URL)");
        if (config_.api_key.empty())
            throw ConfigError("live backend: api_key must be set (PROVIDER_API_KEY)");
    }

    GenerationResponse generate(const GenerationRequest& request) override {
        validate_request(request);
        nlohmann::json body{
            {"model", request.model_id},
            {"temperature", request.temperature},
            {"max_tokens", request.max_decode_tokens},
            {"n", request.sample_count},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        };

        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) backoff(attempt);
            try {
                return attempt_once(body, request);
            } catch (const TransportError& e) {
                last_error = e.what();
            }
        }
        throw GenerationError("live backend failed after " + std::to_string(config_.max_retries + 1) +
                              " attempts: " + last_error);
    }

    std::string name() const override { return "live"; }

private:
    GenerationResponse attempt_once(const nlohmann::json& body, const GenerationRequest& request) {
        auto [host, path_prefix] = split_url(config_.base_url);
        httplib::Client client(host);
        client.set_connection_timeout(config_.connect_timeout_sec);
        client.set_read_timeout(config_.read_timeout_sec);
        httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};

        auto result = client.Post(path_prefix + "/chat/completions", headers, body.dump(),
                                  "application/json");
        if (!result) throw TransportError("connection failed: " + httplib::to_string(result.error()));
        if (result->status == 429 || result->status == 402 || result->status == 403)
            throw QuotaError("backend rejected request with status " + std::to_string(result->status));
        if (result->status >= 500) throw TransportError("server error " + std::to_string(result->status));
        if (result->status != 200)
            throw GenerationError("unexpected status " + std::to_string(result->status) + ": " +
                                  result->body);

        nlohmann::json j;
        try {
            j = nlohmann::json::parse(result->body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("unparseable response body: ") + e.what());
        }
        GenerationResponse resp;
        for (const nlohmann::json& choice : j.at("choices")) {
            resp.texts.push_back(choice.at("message").at("content").get<std::string>());
        }
        if (resp.texts.size() != static_cast<size_t>(request.sample_count))
            throw GenerationError("backend returned " + std::to_string(resp.texts.size()) +
                                  " choices, expected " + std::to_string(request.sample_count));
        long total_completion = 0;
        if (j.contains("usage")) {
            resp.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
            total_completion = j["usage"].value("completion_tokens", 0L);
        }
        // The API reports completion tokens for the whole batch only; split
        // proportionally to text length as a documented approximation.
        long total_ws = 0;
        for (const std::string& t : resp.texts) total_ws += text::count_ws_tokens(t);
        for (const std::string& t : resp.texts) {
            long ws = text::count_ws_tokens(t);
            resp.decoded_tokens.push_back(total_ws > 0 ? total_completion * ws / total_ws : 0);
        }
        return resp;
    }

    void backoff(int attempt) {
        uint64_t jitter = splitmix64(static_cast<uint64_t>(
                              std::chrono::steady_clock::now().time_since_epoch().count())) %
                          128;
        auto delay = std::chrono::milliseconds((250u << (attempt - 1)) + jitter);
        std::this_thread::sleep_for(delay);
    }

    static std::pair<std::string, std::string> split_url(const std::string& url) {
        size_t scheme = url.find("://");
        size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
        size_t path_start = url.find('/', host_start);
        if (path_start == std::string::npos) return {url, ""};
        std::string path = url.substr(path_start);
        while (!path.empty() && path.back() == '/') path.pop_back();
        return {url.substr(0, path_start), path};
    }

    LiveBackendConfig config_;
};

inline std::shared_ptr<Backend> make_live_backend(LiveBackendConfig config) {
    return std::make_shared<LiveBackend>(std::move(config));
}

} // namespace sc2
