#pragma once

// Requires cpp-httplib; define CPPHTTPLIB_OPENSSL_SUPPORT before including
// this header for https endpoints.

#include "w4s/backend.hpp"
#include "w4s/config.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

namespace w4s {

// OpenAI-style chat-completions client. Transport failures, 429 and 5xx are
// retried with exponential backoff up to BackendSpec::retries.
class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(BackendSpec spec) : spec_(std::move(spec)) {
        if (!spec_.api_key_env.empty()) {
            const char* key = std::getenv(spec_.api_key_env.c_str());
            if (!key || !*key)
                throw Error(ErrorKind::BackendUnavailable, "environment variable " + spec_.api_key_env + " is not set");
            api_key_ = key;
        }
    }

    Completion complete(const MessageList& messages, double temperature, int n) override {
        if (n < 1) throw Error(ErrorKind::InvalidValue, "n must be >= 1");
        Completion out;
        // Some endpoints cap or ignore n; keep asking until n texts arrive.
        while (static_cast<int>(out.texts.size()) < n) {
            const int want = n - static_cast<int>(out.texts.size());
            Completion part = request(messages, temperature, want);
            if (part.texts.empty()) throw Error(ErrorKind::BackendUnavailable, "endpoint returned no choices");
            for (auto& t : part.texts) {
                if (static_cast<int>(out.texts.size()) < n) out.texts.push_back(std::move(t));
            }
            out.tokens_in += part.tokens_in;
            out.tokens_out += part.tokens_out;
        }
        return out;
    }

private:
    Completion request(const MessageList& messages, double temperature, int n) {
        Json body{{"model", spec_.model}, {"messages", messages}, {"temperature", temperature}, {"n", n}};
        const std::string payload = body.dump();
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt <= spec_.retries; ++attempt) {
            if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(500 << std::min(attempt - 1, 5)));
            httplib::Client client(spec_.endpoint);
            const auto timeout = std::chrono::milliseconds(spec_.timeout_ms);
            client.set_connection_timeout(timeout);
            client.set_read_timeout(timeout);
            client.set_write_timeout(timeout);
            httplib::Headers headers;
            if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
            auto res = client.Post(spec_.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw Error(ErrorKind::BackendUnavailable,
                            "HTTP " + std::to_string(res->status) + ": " + utf8_prefix(res->body, 500));
            try {
                const Json j = Json::parse(res->body);
                Completion c;
                for (const auto& choice : j.at("choices")) {
                    const Json& content = choice.at("message").at("content");
                    c.texts.push_back(content.is_string() ? content.get<std::string>() : std::string());
                }
                if (j.contains("usage")) {
                    c.tokens_in = j["usage"].value("prompt_tokens", std::int64_t{0});
                    c.tokens_out = j["usage"].value("completion_tokens", std::int64_t{0});
                }
                return c;
            } catch (const Json::exception& e) {
                throw Error(ErrorKind::BackendUnavailable, std::string("malformed response: ") + e.what());
            }
        }
        throw Error(ErrorKind::BackendUnavailable, spec_.endpoint + spec_.path + " failed after " +
                                                       std::to_string(spec_.retries + 1) + " attempts: " + last_error);
    }

    BackendSpec spec_;
    std::string api_key_;
};

}  // namespace w4s
