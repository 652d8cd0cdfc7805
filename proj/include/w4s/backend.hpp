#pragma once

#include "w4s/prompts.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace w4s {

struct Completion {
    std::vector<std::string> texts;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
};

// A chat-completions endpoint. Implementations must tolerate concurrent calls.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual Completion complete(const MessageList& messages, double temperature, int n) = 0;
};

// Whitespace word count. The mock backends report this as their token
// usage so accounting stays deterministic.
inline std::int64_t approx_tokens(std::string_view text) {
    return static_cast<std::int64_t>(split_whitespace(text).size());
}

inline std::int64_t approx_tokens(const MessageList& messages) {
    std::int64_t n = 0;
    for (const auto& m : messages) n += approx_tokens(m.content);
    return n;
}

// One logged backend or helper interaction. Meta-agent calls use the
// invocation id "meta"; helper calls use the workflow invocation id.
struct HelperCallRecord {
    std::string invocation_id;
    std::int64_t sequence_no = 0;
    std::string method;
    Json request;
    Json response;  // {"ok": true, "result": ...} or {"ok": false, "error": {"kind", "message"}}
    std::int64_t latency_ms = 0;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
};

inline void to_json(Json& j, const HelperCallRecord& r) {
    j = Json{{"invocation_id", r.invocation_id}, {"sequence_no", r.sequence_no}, {"method", r.method},
             {"request", r.request},             {"response", r.response},       {"latency_ms", r.latency_ms},
             {"tokens_in", r.tokens_in},         {"tokens_out", r.tokens_out}};
}

inline void from_json(const Json& j, HelperCallRecord& r) {
    r.invocation_id = j.at("invocation_id").get<std::string>();
    r.sequence_no = j.at("sequence_no").get<std::int64_t>();
    r.method = j.at("method").get<std::string>();
    r.request = j.value("request", Json::object());
    r.response = j.value("response", Json::object());
    r.latency_ms = j.value("latency_ms", 0);
    r.tokens_in = j.value("tokens_in", 0);
    r.tokens_out = j.value("tokens_out", 0);
}

// ---- mock scenario ---------------------------------------------------------

inline std::string scenario_text(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

struct ScenarioStep {
    std::vector<std::string> responses;
    std::vector<double> true_accuracy;  // informational, for test harnesses
    std::string expect_contains;        // optional guard on the last message
};

struct ExecutorRule {
    std::vector<std::string> contains;  // all must occur in the conversation
    std::vector<std::string> responses;
};

// Scripted behavior for both roles:
//   {"steps": [{"responses": [...], "true_accuracy": [...], "expect_contains": "..."}],
//    "executor": {"rules": [{"contains": "..." | [...], "responses": [...]}], "default": [...]}}
// Responses may be strings or JSON values (serialized compactly).
struct Scenario {
    std::vector<ScenarioStep> steps;
    std::vector<ExecutorRule> executor_rules;
    std::vector<std::string> executor_default;

    static Scenario from_json(const Json& j) {
        Scenario s;
        for (const auto& step : j.value("steps", Json::array())) {
            ScenarioStep st;
            for (const auto& r : step.at("responses")) st.responses.push_back(scenario_text(r));
            st.true_accuracy = step.value("true_accuracy", std::vector<double>{});
            st.expect_contains = step.value("expect_contains", "");
            s.steps.push_back(std::move(st));
        }
        if (j.contains("executor")) {
            const Json& ex = j["executor"];
            for (const auto& rule : ex.value("rules", Json::array())) {
                ExecutorRule r;
                const Json& c = rule.at("contains");
                if (c.is_array()) r.contains = c.get<std::vector<std::string>>();
                else r.contains.push_back(c.get<std::string>());
                for (const auto& resp : rule.at("responses")) r.responses.push_back(scenario_text(resp));
                s.executor_rules.push_back(std::move(r));
            }
            for (const auto& resp : ex.value("default", Json::array())) s.executor_default.push_back(scenario_text(resp));
        }
        return s;
    }

    static Scenario load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }
};

// The meta-agent policy as a script: the k-th complete() call is served from
// step k, returning its first n responses. Thread-safe; the cursor advances
// under a lock.
class MockMetaBackend final : public ChatBackend {
public:
    explicit MockMetaBackend(Scenario scenario) : scenario_(std::move(scenario)) {}

    Completion complete(const MessageList& messages, double /*temperature*/, int n) override {
        if (n < 1) throw Error(ErrorKind::InvalidValue, "n must be >= 1");
        std::lock_guard lock(mu_);
        if (cursor_ >= scenario_.steps.size())
            throw Error(ErrorKind::ScenarioExhausted, "mock scenario has no step " + std::to_string(cursor_));
        const ScenarioStep& step = scenario_.steps[cursor_];
        if (step.responses.size() < static_cast<std::size_t>(n))
            throw Error(ErrorKind::ScenarioExhausted, "step " + std::to_string(cursor_) + " scripts " +
                                                          std::to_string(step.responses.size()) + " responses, " +
                                                          std::to_string(n) + " requested");
        if (!step.expect_contains.empty() && (messages.empty() || !contains(messages.back().content, step.expect_contains)))
            throw Error(ErrorKind::ScenarioMismatch,
                        "step " + std::to_string(cursor_) + " expected \"" + step.expect_contains + "\"");
        ++cursor_;
        Completion c;
        c.texts.assign(step.responses.begin(), step.responses.begin() + n);
        c.tokens_in = approx_tokens(messages);
        for (const auto& t : c.texts) c.tokens_out += approx_tokens(t);
        return c;
    }

    std::size_t steps_consumed() const {
        std::lock_guard lock(mu_);
        return cursor_;
    }

private:
    Scenario scenario_;
    mutable std::mutex mu_;
    std::size_t cursor_ = 0;
};

// The strong executor model as a pure function of the conversation: the
// first rule whose substrings all occur answers, sample i gets response
// i mod size.
class MockExecutorBackend final : public ChatBackend {
public:
    explicit MockExecutorBackend(Scenario scenario) : scenario_(std::move(scenario)) {}

    Completion complete(const MessageList& messages, double /*temperature*/, int n) override {
        if (n < 1) throw Error(ErrorKind::InvalidValue, "n must be >= 1");
        std::string all;
        for (const auto& m : messages) all += m.content + "\n";
        const std::vector<std::string>* pool = &scenario_.executor_default;
        for (const auto& rule : scenario_.executor_rules) {
            const bool match = std::all_of(rule.contains.begin(), rule.contains.end(),
                                           [&](const std::string& s) { return contains(all, s); });
            if (match) {
                pool = &rule.responses;
                break;
            }
        }
        if (pool->empty()) throw Error(ErrorKind::BackendUnavailable, "mock executor has no response for this request");
        Completion c;
        for (int i = 0; i < n; ++i) c.texts.push_back((*pool)[static_cast<std::size_t>(i) % pool->size()]);
        c.tokens_in = approx_tokens(messages);
        for (const auto& t : c.texts) c.tokens_out += approx_tokens(t);
        return c;
    }

private:
    Scenario scenario_;
};

using RecordSink = std::function<void(HelperCallRecord)>;

// Logs every meta-agent call so a run can be replayed without the backend.
class RecordingBackend final : public ChatBackend {
public:
    RecordingBackend(ChatBackend& inner, RecordSink sink, std::string invocation_id = "meta")
        : inner_(inner), sink_(std::move(sink)), invocation_id_(std::move(invocation_id)) {}

    Completion complete(const MessageList& messages, double temperature, int n) override {
        const auto start = std::chrono::steady_clock::now();
        HelperCallRecord rec;
        rec.invocation_id = invocation_id_;
        rec.method = "meta.complete";
        rec.request = Json{{"messages_hash", messages_hash(messages)}, {"temperature", temperature}, {"n", n}};
        try {
            Completion c = inner_.complete(messages, temperature, n);
            rec.response = Json{{"ok", true}, {"result", c.texts}};
            rec.tokens_in = c.tokens_in;
            rec.tokens_out = c.tokens_out;
            finish(rec, start);
            return c;
        } catch (const Error& e) {
            rec.response = Json{{"ok", false}, {"error", {{"kind", to_string(e.kind())}, {"message", e.what()}}}};
            finish(rec, start);
            throw;
        }
    }

private:
    void finish(HelperCallRecord& rec, std::chrono::steady_clock::time_point start) {
        rec.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
        rec.sequence_no = seq_.fetch_add(1);
        sink_(std::move(rec));
    }

    ChatBackend& inner_;
    RecordSink sink_;
    std::string invocation_id_;
    std::atomic<std::int64_t> seq_{0};
};

// Serves meta-agent completions from a recorded log, in order. The request
// digest must match the recording.
class ReplayMetaBackend final : public ChatBackend {
public:
    explicit ReplayMetaBackend(std::vector<HelperCallRecord> records) : records_(std::move(records)) {
        std::sort(records_.begin(), records_.end(),
                  [](const auto& a, const auto& b) { return a.sequence_no < b.sequence_no; });
    }

    Completion complete(const MessageList& messages, double /*temperature*/, int n) override {
        std::lock_guard lock(mu_);
        if (cursor_ >= records_.size()) throw Error(ErrorKind::ReplayMismatch, "meta log exhausted");
        const HelperCallRecord& rec = records_[cursor_++];
        if (rec.request.value("messages_hash", "") != messages_hash(messages) || rec.request.value("n", 0) != n)
            throw Error(ErrorKind::ReplayMismatch,
                        "meta call " + std::to_string(rec.sequence_no) + " differs from the recording");
        if (!rec.response.value("ok", false)) {
            throw Error(ErrorKind::BackendUnavailable, rec.response["error"].value("message", "recorded failure"));
        }
        Completion c;
        c.texts = rec.response.at("result").get<std::vector<std::string>>();
        c.tokens_in = rec.tokens_in;
        c.tokens_out = rec.tokens_out;
        return c;
    }

private:
    std::vector<HelperCallRecord> records_;
    std::mutex mu_;
    std::size_t cursor_ = 0;
};

// Stands in for the executor during replay; every helper call is served
// from the log, so reaching this backend means the log is incomplete.
class DisabledBackend final : public ChatBackend {
public:
    Completion complete(const MessageList&, double, int) override {
        throw Error(ErrorKind::BackendUnavailable, "backend disabled");
    }
};

}  // namespace w4s
