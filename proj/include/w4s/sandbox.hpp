#pragma once

#include "w4s/backend.hpp"
#include "w4s/domain.hpp"
#include "w4s/extract.hpp"
#include "w4s/process.hpp"

#include <chrono>
#include <map>
#include <mutex>
#include <regex>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace w4s {

// ---- policy ------------------------------------------------------------------

// Patterns refused before anything runs. A match is reported back as a
// PolicyViolation error, never silently edited out of the program.
inline std::vector<std::string> unsafe_patterns(std::string_view source) {
    static const std::vector<std::pair<std::string, std::regex>> denylist = [] {
        std::vector<std::pair<std::string, std::regex>> v;
        for (const char* p : {R"(\bimport\s+socket\b)", R"(\bfrom\s+socket\s+import\b)", R"(\bimport\s+subprocess\b)",
                              R"(\bfrom\s+subprocess\s+import\b)", R"(\bos\.system\s*\()", R"(\bos\.popen\s*\()",
                              R"(\bos\.(fork|kill|killpg|exec\w*|spawn\w*)\s*\()", R"(\bshutil\.rmtree\s*\()",
                              R"(\bimport\s+ctypes\b)", R"(\bimport\s+multiprocessing\b)",
                              R"(\b__import__\s*\(\s*['"](os|subprocess|socket|ctypes)['"])",
                              R"(\burllib\.request\b)", R"(\bimport\s+requests\b)"}) {
            v.emplace_back(p, std::regex(p));
        }
        return v;
    }();
    std::vector<std::string> hits;
    const std::string text(source);
    for (const auto& [name, re] : denylist) {
        if (std::regex_search(text, re)) hits.push_back(name);
    }
    return hits;
}

// ---- nested code execution -----------------------------------------------------

namespace detail {

// Runs inside the nested interpreter. Reads one JSON request from stdin,
// writes one JSON line to the original stdout; user prints go to stderr.
inline constexpr std::string_view kCodeDriver = R"PY(
import sys, json
_out = sys.stdout
sys.stdout = sys.stderr
def _emit(o):
    _out.write(json.dumps(o, sort_keys=True) + "\n")
    _out.flush()
def _plain(v):
    try:
        json.dumps(v)
        return v
    except Exception:
        return repr(v)
_req = json.loads(sys.stdin.read())
_ns = {"__name__": "__sandbox__"}
try:
    exec(compile(_req["code"], "<solution>", "exec"), _ns)
except BaseException as e:
    _emit({"ok": False, "kind": type(e).__name__, "message": str(e)})
    sys.exit(0)
if _req["mode"] == "solution":
    _fn = _ns.get("solution")
    if not callable(_fn):
        _emit({"ok": False, "kind": "MissingSolutionFunction", "message": "code does not define solution()"})
        sys.exit(0)
    try:
        _v = _fn()
    except BaseException as e:
        _emit({"ok": False, "kind": type(e).__name__, "message": str(e)})
        sys.exit(0)
    _emit({"ok": True, "value": _plain(_v)})
else:
    _results = []
    for _t in _req["tests"]:
        try:
            exec(compile(_t, "<test>", "exec"), dict(_ns))
            _results.append({"passed": True})
        except BaseException as e:
            _results.append({"passed": False, "kind": type(e).__name__, "message": str(e)})
    _emit({"ok": True, "results": _results})
)PY";

}  // namespace detail

struct CodeRunResult {
    bool ok = false;
    Json value;  // solution() return value
    std::string kind;
    std::string message;
};

struct TestOutcome {
    bool passed = false;
    std::string kind;
    std::string message;
};

// Executes untrusted snippets in a fresh, network-isolated interpreter with
// its own wall-clock budget.
class CodeRunner {
public:
    CodeRunner(std::string python_command = "python3", int timeout_ms = 10000)
        : python_(std::move(python_command)), timeout_ms_(timeout_ms) {}

    CodeRunResult run_solution(std::string_view code) const {
        if (auto hits = unsafe_patterns(code); !hits.empty())
            return {false, {}, "PolicyViolation", "code matches denied pattern " + hits.front()};
        const auto reply = run(Json{{"mode", "solution"}, {"code", code}});
        if (!reply) return {false, {}, "NestedTimeout", "code exceeded " + std::to_string(timeout_ms_) + " ms"};
        if (reply->value("ok", false)) return {true, reply->value("value", Json()), {}, {}};
        return {false, {}, reply->value("kind", "RuntimeError"), reply->value("message", "")};
    }

    // One outcome per test, in order.
    std::vector<TestOutcome> run_tests(std::string_view code, const std::vector<std::string>& tests) const {
        std::vector<TestOutcome> out(tests.size());
        auto fail_all = [&](const std::string& kind, const std::string& msg) {
            for (auto& t : out) t = {false, kind, msg};
            return out;
        };
        if (auto hits = unsafe_patterns(code); !hits.empty())
            return fail_all("PolicyViolation", "code matches denied pattern " + hits.front());
        const auto reply = run(Json{{"mode", "tests"}, {"code", code}, {"tests", tests}});
        if (!reply) return fail_all("NestedTimeout", "tests exceeded " + std::to_string(timeout_ms_) + " ms");
        if (!reply->value("ok", false)) return fail_all(reply->value("kind", "RuntimeError"), reply->value("message", ""));
        const auto& results = (*reply)["results"];
        for (std::size_t i = 0; i < out.size() && i < results.size(); ++i) {
            out[i].passed = results[i].value("passed", false);
            out[i].kind = results[i].value("kind", "");
            out[i].message = results[i].value("message", "");
        }
        return out;
    }

    int timeout_ms() const { return timeout_ms_; }

private:
    std::optional<Json> run(const Json& request) const {
        ScratchDir scratch("w4s-code");
        SpawnOptions opts;
        opts.argv = {python_, "-I", "-S", "-c", std::string(detail::kCodeDriver)};
        opts.cwd = scratch.path();
        auto proc = Subprocess::spawn(opts);
        const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms_);
        if (!proc.write_all(request.dump(), deadline)) return std::nullopt;
        proc.close_stdin();
        const auto text = proc.read_all(deadline, 4u << 20);
        if (!text) return std::nullopt;
        proc.wait(deadline + std::chrono::milliseconds(500));
        const std::string line = trim(*text);
        const auto nl = line.rfind('\n');
        try {
            return Json::parse(nl == std::string::npos ? line : line.substr(nl + 1));
        } catch (const Json::exception&) {
            return Json{{"ok", false},
                        {"kind", "RuntimeCrash"},
                        {"message", "nested interpreter produced no result: " + trim(proc.stderr_tail())}};
        }
    }

    std::string python_;
    int timeout_ms_;
};

// ---- helper services -------------------------------------------------------------

struct HelperContext {
    const TaskSpec& task;
    const Sample& sample;
    std::string invocation_id;
    std::int64_t sequence_no = 0;
};

struct HelperReply {
    bool ok = true;
    Json result;
    std::string error_kind;
    std::string error_message;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    std::int64_t api_calls = 0;

    static HelperReply failure(std::string kind, std::string message) {
        HelperReply r;
        r.ok = false;
        r.error_kind = std::move(kind);
        r.error_message = std::move(message);
        return r;
    }

    Json wire() const {
        return ok ? Json{{"ok", true}, {"result", result}}
                  : Json{{"ok", false}, {"error", {{"kind", error_kind}, {"message", error_message}}}};
    }
};

class HelperService {
public:
    virtual ~HelperService() = default;
    virtual HelperReply serve(const HelperContext& ctx, const std::string& name, const Json& args) = 0;
};

namespace detail {

inline MessageList messages_from_args(const Json& raw) {
    MessageList msgs;
    if (raw.is_string()) {
        msgs.push_back({Role::user, raw.get<std::string>()});
        return msgs;
    }
    if (!raw.is_array()) throw Error(ErrorKind::InvalidValue, "messages must be a list");
    for (const auto& m : raw) {
        Message msg;
        msg.role = m.value("role", Role::user);
        const Json& c = m.at("content");
        msg.content = c.is_string() ? c.get<std::string>() : c.dump();
        msgs.push_back(std::move(msg));
    }
    return msgs;
}

inline std::string executor_system_prompt(const std::string& role, const std::string& instructions) {
    std::string sys = role.empty() ? "You are a helpful assistant." : "You are a " + role + ".";
    if (!trim(instructions).empty()) sys += "\n\n" + instructions;
    return sys;
}

// Accepts a bare object, a fenced ```json block, or prose with one embedded object.
inline std::optional<Json> parse_json_object(std::string_view text) {
    auto attempt = [](std::string_view s) -> std::optional<Json> {
        try {
            Json j = Json::parse(s);
            if (j.is_object()) return j;
        } catch (const Json::exception&) {
        }
        return std::nullopt;
    };
    if (auto j = attempt(trim(text))) return j;
    for (const auto& block : fenced_blocks(text)) {
        if (auto j = attempt(block.content)) return j;
    }
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open)
        return attempt(text.substr(open, close - open + 1));
    return std::nullopt;
}

}  // namespace detail

// Serves the helper API from live backends: the executor model for LLM
// calls and the nested interpreter for code.
class LiveHelperService final : public HelperService {
public:
    LiveHelperService(ChatBackend& executor, const CodeRunner& runner) : executor_(executor), runner_(runner) {}

    HelperReply serve(const HelperContext& ctx, const std::string& name, const Json& args) override {
        try {
            if (name == "call_llm") return call_llm(args);
            if (name == "call_json_format_llm") return call_json_format_llm(args);
            if (name == "execute_code") return execute_code(args);
            if (name == "extract_answer_str") {
                HelperReply r;
                r.result = extract_answer_str(text_arg(args, "response", 0));
                return r;
            }
            if (name == "extract_code_block") {
                HelperReply r;
                std::string entry = args.value("entry_point", Json("solution")).get<std::string>();
                r.result = extract_code_block(text_arg(args, "response", 0), entry);
                return r;
            }
            if (name == "test_on_public_test") return test_on_public_test(ctx, args);
            return HelperReply::failure("UnknownHelper", "no helper named " + name);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::BackendUnavailable) return HelperReply::failure("ExecutorUnavailable", e.what());
            return HelperReply::failure(std::string(to_string(e.kind())), e.what());
        } catch (const Json::exception& e) {
            return HelperReply::failure("TypeError", std::string("bad helper arguments: ") + e.what());
        }
    }

private:
    static std::string text_arg(const Json& args, const char* key, int) {
        const Json& v = args.at(key);
        return v.is_string() ? v.get<std::string>() : v.dump();
    }

    static int count_arg(const Json& args) {
        if (args.contains("num_of_response")) return args["num_of_response"].get<int>();
        return args.value("n", 1);
    }

    Completion ask(const Json& args, std::string extra_instructions, int n) {
        MessageList msgs = detail::messages_from_args(args.at("messages"));
        std::string instructions = args.value("instructions", "");
        if (!extra_instructions.empty()) instructions += (instructions.empty() ? "" : "\n\n") + extra_instructions;
        msgs.insert(msgs.begin(), Message{Role::system,
                                          detail::executor_system_prompt(args.value("agent_role", ""), instructions)});
        return executor_.complete(msgs, args.value("temperature", 0.5), n);
    }

    HelperReply call_llm(const Json& args) {
        const int n = count_arg(args);
        if (n < 1) return HelperReply::failure("ValueError", "num_of_response must be >= 1");
        Completion c = ask(args, {}, n);
        HelperReply r;
        r.result = c.texts;
        r.tokens_in = c.tokens_in;
        r.tokens_out = c.tokens_out;
        r.api_calls = 1;
        return r;
    }

    HelperReply call_json_format_llm(const Json& args) {
        const int n = count_arg(args);
        const auto keys = args.at("return_dict_keys").get<std::vector<std::string>>();
        if (keys.empty()) return HelperReply::failure("ValueError", "return_dict_keys is empty");
        if (n < 1) return HelperReply::failure("ValueError", "num_of_response must be >= 1");
        std::string key_list;
        for (const auto& k : keys) key_list += (key_list.empty() ? "\"" : ", \"") + k + "\"";
        const std::string format = "Reply with a single JSON object containing exactly these keys: " + key_list +
                                   ". Output only the JSON object.";
        Completion c = ask(args, format, n);
        HelperReply r;
        r.tokens_in = c.tokens_in;
        r.tokens_out = c.tokens_out;
        r.api_calls = 1;
        Json out = Json::array();
        for (const auto& text : c.texts) {
            auto parsed = detail::parse_json_object(text);
            if (!parsed) {
                // One repair round per unparseable completion.
                Json repair_args = args;
                Json msgs = args.at("messages").is_array() ? args.at("messages") : Json::array();
                msgs.push_back({{"role", "assistant"}, {"content", text}});
                msgs.push_back({{"role", "user"},
                                {"content", "Your previous reply was not a valid JSON object. " + format}});
                repair_args["messages"] = msgs;
                Completion fix = ask(repair_args, format, 1);
                r.tokens_in += fix.tokens_in;
                r.tokens_out += fix.tokens_out;
                r.api_calls += 1;
                if (!fix.texts.empty()) parsed = detail::parse_json_object(fix.texts.front());
            }
            Json obj = parsed.value_or(Json::object());
            for (const auto& k : keys) {
                if (!obj.contains(k)) obj[k] = "";
            }
            out.push_back(std::move(obj));
        }
        r.result = std::move(out);
        return r;
    }

    HelperReply execute_code(const Json& args) {
        const auto res = runner_.run_solution(text_arg(args, "code", 0));
        if (!res.ok) return HelperReply::failure(res.kind, res.message);
        HelperReply r;
        r.result = res.value;
        return r;
    }

    HelperReply test_on_public_test(const HelperContext& ctx, const Json& args) {
        if (ctx.task.family != TaskFamily::code)
            return HelperReply::failure("NotACodeTask", "test_on_public_test needs a code task");
        const std::string task_text = args.contains("task") ? text_arg(args, "task", 0) : ctx.sample.input;
        std::string code = text_arg(args, "solution_code", 0);
        const std::string entry = args.value("entry_point", ctx.task.entry_point.value_or("solution"));
        const int loops = args.value("test_loop", 3);
        if (loops < 1) return HelperReply::failure("ValueError", "test_loop must be >= 1");
        HelperReply r;
        std::string feedback;
        for (int round = 1; round <= loops; ++round) {
            const auto outcomes = runner_.run_tests(code, ctx.sample.public_tests);
            feedback.clear();
            for (std::size_t i = 0; i < outcomes.size(); ++i) {
                if (outcomes[i].passed) continue;
                feedback += "Test: " + ctx.sample.public_tests[i] + "\nError: " + outcomes[i].kind +
                            (outcomes[i].message.empty() ? "" : ": " + outcomes[i].message) + "\n";
            }
            if (feedback.empty()) {
                r.result = Json{{"result", true}, {"solution", code}, {"feedback", ""}};
                return r;
            }
            if (round == loops) break;
            const std::string prompt = "Your Task:\n" + task_text +
                                       "\n\nThe following solution fails some public tests:\n```python\n" + code +
                                       "\n```\nFeedback:\n" + feedback + "\nFix the function `" + entry +
                                       "` and reply with the complete corrected code in one Python code block.";
            Completion c = executor_.complete(
                {{Role::system, detail::executor_system_prompt("Python Programmer", "")}, {Role::user, prompt}}, 0.3, 1);
            r.tokens_in += c.tokens_in;
            r.tokens_out += c.tokens_out;
            r.api_calls += 1;
            try {
                code = extract_code_block(c.texts.front(), entry);
            } catch (const Error&) {
                // Unusable repair; the next round re-tests the previous code.
            }
        }
        r.result = Json{{"result", false}, {"solution", code}, {"feedback", trim(feedback)}};
        return r;
    }

    ChatBackend& executor_;
    const CodeRunner& runner_;
};

// Serves helper replies from recorded HelperCallRecords, keyed by
// (invocation id, sequence number).
class ReplayHelperService final : public HelperService {
public:
    explicit ReplayHelperService(const std::vector<HelperCallRecord>& records) {
        for (const auto& r : records) {
            if (r.invocation_id != "meta") records_[{r.invocation_id, r.sequence_no}] = r;
        }
    }

    HelperReply serve(const HelperContext& ctx, const std::string& name, const Json&) override {
        const auto it = records_.find({ctx.invocation_id, ctx.sequence_no});
        if (it == records_.end() || it->second.method != name)
            return HelperReply::failure("ReplayMismatch", "no recorded " + name + " call for " + ctx.invocation_id +
                                                              "#" + std::to_string(ctx.sequence_no));
        const HelperCallRecord& rec = it->second;
        HelperReply r;
        r.ok = rec.response.value("ok", false);
        if (r.ok) {
            r.result = rec.response.value("result", Json());
        } else {
            r.error_kind = rec.response["error"].value("kind", "RuntimeError");
            r.error_message = rec.response["error"].value("message", "");
        }
        r.tokens_in = rec.tokens_in;
        r.tokens_out = rec.tokens_out;
        r.api_calls = rec.request.value("api_calls", 0);
        return r;
    }

private:
    std::map<std::pair<std::string, std::int64_t>, HelperCallRecord> records_;
};

// ---- workflow execution -------------------------------------------------------------

struct WorkflowError {
    std::string kind;
    std::string message;
    std::string trace;

    std::string report() const {
        std::string s = kind + (message.empty() ? "" : ": " + message);
        if (!trace.empty()) s += "\n" + trace;
        return s;
    }
};

struct WorkflowResult {
    std::variant<Json, WorkflowError> outcome;
    std::string answer;  // canonical answer string when outcome holds a map
    std::vector<HelperCallRecord> helper_calls;
    std::int64_t wall_ms = 0;

    bool ok() const { return std::holds_alternative<Json>(outcome); }
    const WorkflowError& error() const { return std::get<WorkflowError>(outcome); }

    ExecStats stats() const {
        ExecStats s;
        for (const auto& c : helper_calls) {
            s.calls += c.request.value("api_calls", 0);
            s.tokens_in += c.tokens_in;
            s.tokens_out += c.tokens_out;
        }
        s.wall_ms = wall_ms;
        return s;
    }

    static WorkflowResult failure(std::string kind, std::string message, std::string trace = {}) {
        WorkflowResult r;
        r.outcome = WorkflowError{std::move(kind), std::move(message), std::move(trace)};
        return r;
    }
};

class WorkflowExecutor {
public:
    virtual ~WorkflowExecutor() = default;
    // Never throws for workflow-level failures; those are encoded in the outcome.
    virtual WorkflowResult execute(const WorkflowProgram& program, const TaskSpec& task, const Sample& sample,
                                   const std::string& invocation_id) = 0;
};

struct SandboxOptions {
    std::vector<std::string> runtime_command;
    int workflow_timeout_ms = 120000;
    int max_helper_calls = 64;
    std::size_t max_frame_bytes = 4u << 20;
    int grace_ms = 500;
    bool isolate_network = true;
};

// Supervises one runtime process per invocation, speaking newline-delimited
// JSON over its stdin/stdout:
//   host -> runtime  {"id","method":"run_workflow","params":{"source","task","entry_point"?,"invocation_id"}}
//   runtime -> host  {"id","method":"helper","params":{"name","args"}}
//   host -> runtime  {"id","ok":true,"result":...} | {"id","ok":false,"error":{"kind","message"}}
//   runtime -> host  {"id","method":"done","params":{"result":{...}} | {"error":{...}}}
class SandboxHost final : public WorkflowExecutor {
public:
    SandboxHost(SandboxOptions opts, HelperService& helpers) : opts_(std::move(opts)), helpers_(helpers) {}

    WorkflowResult execute(const WorkflowProgram& program, const TaskSpec& task, const Sample& sample,
                           const std::string& invocation_id) override {
        const auto start = Clock::now();
        WorkflowResult result = run(program, task, sample, invocation_id, start);
        result.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
        return result;
    }

    const SandboxOptions& options() const { return opts_; }

private:
    WorkflowResult run(const WorkflowProgram& program, const TaskSpec& task, const Sample& sample,
                       const std::string& invocation_id, Clock::time_point start) {
        if (auto hits = unsafe_patterns(program.source); !hits.empty()) {
            std::string joined;
            for (const auto& h : hits) joined += (joined.empty() ? "" : ", ") + h;
            return WorkflowResult::failure("PolicyViolation", "workflow matches denied pattern(s): " + joined);
        }
        if (opts_.runtime_command.empty()) return WorkflowResult::failure("RuntimeUnavailable", "no runtime command");

        ScratchDir scratch("w4s-run");
        SpawnOptions spawn;
        spawn.argv = opts_.runtime_command;
        spawn.argv.push_back(scratch.path().string());
        spawn.argv.push_back(std::to_string(fnv1a64(invocation_id)));
        spawn.cwd = scratch.path();
        spawn.isolate_network = opts_.isolate_network;

        std::optional<Subprocess> proc;
        try {
            proc.emplace(Subprocess::spawn(spawn));
        } catch (const Error& e) {
            return WorkflowResult::failure("RuntimeUnavailable", e.what());
        }
        const auto deadline = start + std::chrono::milliseconds(opts_.workflow_timeout_ms);

        Json params{{"source", program.source}, {"task", sample.input}, {"invocation_id", invocation_id}};
        if (program.takes_entry_point && task.entry_point) params["entry_point"] = *task.entry_point;
        const Json run_frame{{"id", invocation_id + "/run"}, {"method", "run_workflow"}, {"params", params}};
        if (!send(*proc, run_frame, deadline)) return timeout_or_crash(*proc, deadline);

        WorkflowResult result;
        std::int64_t seq = 0;
        std::string line;
        for (;;) {
            const ReadStatus st = proc->read_line(line, deadline, opts_.max_frame_bytes);
            if (st == ReadStatus::timeout) {
                proc->kill();
                return with_calls(WorkflowResult::failure(
                                      "Timeout", "workflow exceeded " + std::to_string(opts_.workflow_timeout_ms) + " ms"),
                                  std::move(result.helper_calls));
            }
            if (st == ReadStatus::too_long) {
                proc->kill();
                return with_calls(WorkflowResult::failure("ProtocolViolation", "frame exceeds 4 MiB"),
                                  std::move(result.helper_calls));
            }
            if (st == ReadStatus::eof) {
                auto status = proc->wait(Clock::now() + std::chrono::milliseconds(opts_.grace_ms));
                std::string msg = "runtime exited without a done frame";
                if (status) msg += " (status " + std::to_string(WIFEXITED(*status) ? WEXITSTATUS(*status) : -WTERMSIG(*status)) + ")";
                return with_calls(WorkflowResult::failure("RuntimeCrash", msg, trim(proc->stderr_tail())),
                                  std::move(result.helper_calls));
            }
            if (trim(line).empty()) continue;
            Json frame;
            try {
                frame = Json::parse(line);
            } catch (const Json::exception&) {
                proc->kill();
                return with_calls(WorkflowResult::failure("ProtocolViolation", "malformed frame: " + utf8_prefix(line, 200)),
                                  std::move(result.helper_calls));
            }
            const std::string method = frame.value("method", "");
            if (method == "helper") {
                const Json& p = frame.value("params", Json::object());
                HelperCallRecord rec;
                rec.invocation_id = invocation_id;
                rec.sequence_no = seq;
                rec.method = p.value("name", "");
                rec.request = Json{{"args", p.value("args", Json::object())}};
                const auto t0 = Clock::now();
                HelperReply reply;
                if (seq >= opts_.max_helper_calls) {
                    reply = HelperReply::failure("HelperBudgetExceeded",
                                                 "more than " + std::to_string(opts_.max_helper_calls) + " helper calls");
                } else {
                    reply = helpers_.serve(HelperContext{task, sample, invocation_id, seq}, rec.method, rec.request["args"]);
                }
                ++seq;
                rec.request["api_calls"] = reply.api_calls;
                rec.response = reply.wire();
                rec.tokens_in = reply.tokens_in;
                rec.tokens_out = reply.tokens_out;
                rec.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
                result.helper_calls.push_back(rec);
                Json out = reply.wire();
                out["id"] = frame.value("id", Json());
                if (!send(*proc, out, deadline)) return with_calls(timeout_or_crash(*proc, deadline), std::move(result.helper_calls));
                continue;
            }
            if (method == "done") {
                const Json& p = frame.value("params", Json::object());
                proc->close_stdin();
                proc->wait(Clock::now() + std::chrono::milliseconds(opts_.grace_ms));
                if (p.contains("error")) {
                    const Json& e = p["error"];
                    return with_calls(WorkflowResult::failure(e.value("kind", "RuntimeError"), e.value("message", ""),
                                                              e.value("trace", "")),
                                      std::move(result.helper_calls));
                }
                try {
                    const Json& value = p.at("result");
                    result.answer = validate_answer_dict(value);
                    result.outcome = value;
                } catch (const Error& e) {
                    return with_calls(WorkflowResult::failure("ContractViolation", e.what()), std::move(result.helper_calls));
                } catch (const Json::exception&) {
                    return with_calls(WorkflowResult::failure("ContractViolation", "done frame lacks a result"),
                                      std::move(result.helper_calls));
                }
                return result;
            }
            proc->kill();
            return with_calls(WorkflowResult::failure("ProtocolViolation", "unknown method \"" + method + "\""),
                              std::move(result.helper_calls));
        }
    }

    static WorkflowResult with_calls(WorkflowResult r, std::vector<HelperCallRecord> calls) {
        r.helper_calls = std::move(calls);
        return r;
    }

    bool send(Subprocess& proc, const Json& frame, Clock::time_point deadline) {
        return proc.write_all(frame.dump() + "\n", deadline);
    }

    WorkflowResult timeout_or_crash(Subprocess& proc, Clock::time_point deadline) {
        const bool timed_out = Clock::now() >= deadline;
        proc.kill();
        if (timed_out)
            return WorkflowResult::failure("Timeout", "workflow exceeded " + std::to_string(opts_.workflow_timeout_ms) + " ms");
        return WorkflowResult::failure("RuntimeCrash", "runtime closed its input", trim(proc.stderr_tail()));
    }

    SandboxOptions opts_;
    HelperService& helpers_;
};

}  // namespace w4s
