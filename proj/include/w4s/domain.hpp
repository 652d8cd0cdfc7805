#pragma once

#include "w4s/error.hpp"
#include "w4s/util.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace w4s {

enum class TaskFamily { math, qa, code };
enum class Metric { accuracy, token_f1, pass_at_1 };
enum class Split { private_val, public_val, test };
enum class ProgramOrigin { seed, generated, corrected };
enum class Provenance { selected_pair, unselected_turn1, unselected_turn2 };

NLOHMANN_JSON_SERIALIZE_ENUM(TaskFamily, {{TaskFamily::math, "math"},
                                          {TaskFamily::qa, "qa"},
                                          {TaskFamily::code, "code"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Metric, {{Metric::accuracy, "accuracy"},
                                      {Metric::token_f1, "token_f1"},
                                      {Metric::pass_at_1, "pass_at_1"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Split, {{Split::private_val, "private_val"},
                                     {Split::public_val, "public_val"},
                                     {Split::test, "test"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ProgramOrigin, {{ProgramOrigin::seed, "seed"},
                                             {ProgramOrigin::generated, "generated"},
                                             {ProgramOrigin::corrected, "corrected"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Provenance, {{Provenance::selected_pair, "selected_pair"},
                                          {Provenance::unselected_turn1, "unselected_turn1"},
                                          {Provenance::unselected_turn2, "unselected_turn2"}})

inline constexpr double kNoScore = -std::numeric_limits<double>::infinity();
inline constexpr int kMaxCorrectionAttempts = 3;

struct TaskSpec {
    std::string id;
    TaskFamily family = TaskFamily::qa;
    std::string description_text;
    Metric metric = Metric::accuracy;
    std::string answer_schema;
    std::optional<std::string> entry_point;
    std::string dataset_ref;

    void validate() const {
        if (id.empty()) throw Error(ErrorKind::InvalidValue, "task id is empty");
        if (trim(description_text).empty())
            throw Error(ErrorKind::InvalidValue, "task " + id + ": description_text is empty");
        const bool code = family == TaskFamily::code;
        if ((metric == Metric::pass_at_1) != code || entry_point.has_value() != code)
            throw Error(ErrorKind::InvalidValue,
                        "task " + id + ": pass_at_1, code family and entry_point must go together");
        if (entry_point && entry_point->empty())
            throw Error(ErrorKind::InvalidValue, "task " + id + ": entry_point is empty");
    }

    friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct Sample {
    std::string id;
    std::string input;
    std::string gold;
    std::vector<std::string> public_tests;
    Split split = Split::private_val;

    void validate(TaskFamily family) const {
        if (family == TaskFamily::code) {
            if (public_tests.empty())
                throw Error(ErrorKind::InvalidValue, "code sample " + id + " has no public tests");
        } else if (gold.empty()) {
            throw Error(ErrorKind::InvalidValue, "sample " + id + " has an empty gold answer");
        }
    }

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct WorkflowProgram {
    std::string source;
    int correction_attempts = 0;
    ProgramOrigin origin = ProgramOrigin::generated;
    // Derived from the declared signature: workflow(agent, task, entry_point).
    bool takes_entry_point = false;

    friend bool operator==(const WorkflowProgram&, const WorkflowProgram&) = default;
};

namespace detail {

// Returns the parameter count of the first top-level `def workflow(...)`,
// or nullopt when no such definition exists.
inline std::optional<int> workflow_param_count(std::string_view src) {
    std::size_t pos = 0;
    while ((pos = src.find("def", pos)) != std::string_view::npos) {
        std::size_t line_start = src.rfind('\n', pos == 0 ? 0 : pos - 1);
        line_start = line_start == std::string_view::npos ? 0 : line_start + 1;
        const bool at_line_start =
            std::all_of(src.begin() + static_cast<std::ptrdiff_t>(line_start),
                        src.begin() + static_cast<std::ptrdiff_t>(pos),
                        [](char c) { return c == ' ' || c == '\t'; });
        std::size_t p = pos + 3;
        const bool has_space = p < src.size() && (src[p] == ' ' || src[p] == '\t');
        while (p < src.size() && (src[p] == ' ' || src[p] == '\t')) ++p;
        constexpr std::string_view name = "workflow";
        if (at_line_start && has_space && src.substr(p, name.size()) == name) {
            p += name.size();
            while (p < src.size() && (src[p] == ' ' || src[p] == '\t')) ++p;
            if (p < src.size() && src[p] == '(') {
                int depth = 0;
                int params = 0;
                bool token = false;
                for (std::size_t i = p; i < src.size(); ++i) {
                    const char c = src[i];
                    if (c == '(' || c == '[' || c == '{') {
                        if (depth++ > 0) token = true;
                    } else if (c == ')' || c == ']' || c == '}') {
                        if (--depth == 0) return params + (token ? 1 : 0);
                        token = true;
                    } else if (c == ',' && depth == 1) {
                        if (token) ++params;
                        token = false;
                    } else if (c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '\\') {
                        token = true;
                    }
                }
                return std::nullopt;
            }
        }
        pos += 3;
    }
    return std::nullopt;
}

}  // namespace detail

// Structural check only: the program must declare workflow(agent, task) or
// workflow(agent, task, entry_point). Nothing is executed.
inline WorkflowProgram validate_workflow_program(std::string source,
                                                 ProgramOrigin origin = ProgramOrigin::generated,
                                                 int correction_attempts = 0) {
    if (trim(source).empty()) throw Error(ErrorKind::EmptySource, "workflow source is empty");
    if (correction_attempts < 0 || correction_attempts > kMaxCorrectionAttempts)
        throw Error(ErrorKind::InvalidValue, "correction_attempts out of range");
    const auto params = detail::workflow_param_count(source);
    if (!params)
        throw Error(ErrorKind::MissingEntryFunction, "no `def workflow(...)` found in source");
    if (*params != 2 && *params != 3)
        throw Error(ErrorKind::MissingEntryFunction,
                    "workflow must take (agent, task) or (agent, task, entry_point); found " +
                        std::to_string(*params) + " parameters");
    WorkflowProgram program;
    program.source = std::move(source);
    program.origin = origin;
    program.correction_attempts = correction_attempts;
    program.takes_entry_point = *params == 3;
    return program;
}

// Coerces the "answer" entry of a workflow result to the canonical string
// used for scoring. Scalars follow Python's str() so the host and the
// runtime agree on the rendering.
inline std::string validate_answer_dict(const Json& result) {
    if (!result.is_object())
        throw Error(ErrorKind::MissingAnswerKey, "workflow result is not a key-value map");
    const auto it = result.find("answer");
    if (it == result.end()) throw Error(ErrorKind::MissingAnswerKey, "result lacks the \"answer\" key");
    const Json& v = *it;
    switch (v.type()) {
        case Json::value_t::string: return v.get<std::string>();
        case Json::value_t::number_integer: return std::to_string(v.get<std::int64_t>());
        case Json::value_t::number_unsigned: return std::to_string(v.get<std::uint64_t>());
        case Json::value_t::number_float: return python_float_repr(v.get<double>());
        case Json::value_t::boolean: return v.get<bool>() ? "True" : "False";
        case Json::value_t::null: return "None";
        default:
            throw Error(ErrorKind::NonCoercibleValue,
                        std::string("\"answer\" has non-scalar type ") + v.type_name());
    }
}

struct AgentAction {
    std::string analysis;
    WorkflowProgram program;
    std::string raw_response;

    friend bool operator==(const AgentAction&, const AgentAction&) = default;
};

struct CaseStudy {
    std::string input;
    std::string model_answer;
    std::string gold_answer;

    friend bool operator==(const CaseStudy&, const CaseStudy&) = default;
};

struct ExecStats {
    std::int64_t calls = 0;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    std::int64_t wall_ms = 0;

    ExecStats& operator+=(const ExecStats& o) {
        calls += o.calls;
        tokens_in += o.tokens_in;
        tokens_out += o.tokens_out;
        wall_ms += o.wall_ms;
        return *this;
    }

    friend bool operator==(const ExecStats&, const ExecStats&) = default;
};

struct Feedback {
    double score = 0.0;
    std::vector<CaseStudy> case_studies;
    bool failed = false;
    ExecStats exec_stats;

    void validate() const {
        if (!(score >= 0.0 && score <= 1.0))
            throw Error(ErrorKind::InvalidValue, "feedback score outside [0,1]");
    }

    friend bool operator==(const Feedback&, const Feedback&) = default;
};

struct HistoryEntry {
    WorkflowProgram program;
    Feedback feedback;

    friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

// The state s: instructions, task, the in-window history and its best score.
// window_history may hold one carried entry (seed or the previous window's
// last selected program) plus up to `horizon` in-window turns.
struct OptimizationState {
    std::string instructions;
    TaskSpec task;
    std::vector<HistoryEntry> window_history;
    double window_best = kNoScore;
    int window_turns = 0;

    std::optional<double> last_score() const {
        if (window_history.empty()) return std::nullopt;
        return window_history.back().feedback.score;
    }

    double recomputed_best() const {
        double best = kNoScore;
        for (const auto& e : window_history) best = std::max(best, e.feedback.score);
        return best;
    }

    friend bool operator==(const OptimizationState&, const OptimizationState&) = default;
};

struct TrajectoryStep {
    std::string state_render;
    std::string action_text;
    double reward = 0.0;
    double score = 0.0;
    // Bookkeeping for export ordering and metadata.
    int iteration = 0;
    int candidate = 0;

    friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

struct Trajectory {
    std::string id;
    std::string task_id;
    std::vector<TrajectoryStep> steps;
    Provenance provenance = Provenance::unselected_turn1;

    void validate() const {
        const bool pair = provenance == Provenance::selected_pair;
        if (steps.empty() || steps.size() > 2 || (steps.size() == 2) != pair)
            throw Error(ErrorKind::InvalidValue, "trajectory " + id + ": length/provenance mismatch");
        for (const auto& s : steps) {
            if (s.reward != 0.0 && s.reward != 0.5 && s.reward != 1.0)
                throw Error(ErrorKind::InvalidValue, "trajectory " + id + ": reward not in {0,0.5,1}");
        }
    }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

// ---- JSON encoding -------------------------------------------------------

inline Json score_to_json(double v) { return std::isinf(v) ? Json(nullptr) : Json(v); }
inline double score_from_json(const Json& j) { return j.is_null() ? kNoScore : j.get<double>(); }

inline void to_json(Json& j, const TaskSpec& t) {
    j = Json{{"id", t.id},
             {"family", t.family},
             {"description_text", t.description_text},
             {"metric", t.metric},
             {"answer_schema", t.answer_schema},
             {"dataset_ref", t.dataset_ref}};
    if (t.entry_point) j["entry_point"] = *t.entry_point;
}

inline void from_json(const Json& j, TaskSpec& t) {
    t.id = j.at("id").get<std::string>();
    t.family = j.at("family").get<TaskFamily>();
    t.description_text = j.at("description_text").get<std::string>();
    t.metric = j.at("metric").get<Metric>();
    t.answer_schema = j.value("answer_schema", "");
    t.dataset_ref = j.value("dataset_ref", "");
    t.entry_point.reset();
    if (j.contains("entry_point") && !j["entry_point"].is_null())
        t.entry_point = j["entry_point"].get<std::string>();
}

inline void to_json(Json& j, const Sample& s) {
    j = Json{{"id", s.id}, {"input", s.input}, {"gold", s.gold}, {"split", s.split}};
    if (!s.public_tests.empty()) j["public_tests"] = s.public_tests;
}

inline void from_json(const Json& j, Sample& s) {
    s.id = j.value("id", "");
    s.input = j.at("input").get<std::string>();
    s.gold = j.value("gold", "");
    s.public_tests = j.value("public_tests", std::vector<std::string>{});
    s.split = j.at("split").get<Split>();
}

inline void to_json(Json& j, const WorkflowProgram& p) {
    j = Json{{"source", p.source},
             {"correction_attempts", p.correction_attempts},
             {"origin", p.origin},
             {"takes_entry_point", p.takes_entry_point}};
}

inline void from_json(const Json& j, WorkflowProgram& p) {
    p = validate_workflow_program(j.at("source").get<std::string>(),
                                  j.value("origin", ProgramOrigin::generated),
                                  j.value("correction_attempts", 0));
}

inline void to_json(Json& j, const AgentAction& a) {
    j = Json{{"analysis", a.analysis}, {"program", a.program}, {"raw_response", a.raw_response}};
}

inline void from_json(const Json& j, AgentAction& a) {
    a.analysis = j.at("analysis").get<std::string>();
    a.program = j.at("program").get<WorkflowProgram>();
    a.raw_response = j.at("raw_response").get<std::string>();
}

inline void to_json(Json& j, const CaseStudy& c) {
    j = Json{{"input", c.input}, {"model_answer", c.model_answer}, {"gold_answer", c.gold_answer}};
}

inline void from_json(const Json& j, CaseStudy& c) {
    c.input = j.at("input").get<std::string>();
    c.model_answer = j.at("model_answer").get<std::string>();
    c.gold_answer = j.at("gold_answer").get<std::string>();
}

inline void to_json(Json& j, const ExecStats& s) {
    j = Json{{"calls", s.calls}, {"tokens_in", s.tokens_in}, {"tokens_out", s.tokens_out}, {"wall_ms", s.wall_ms}};
}

inline void from_json(const Json& j, ExecStats& s) {
    s.calls = j.value("calls", 0);
    s.tokens_in = j.value("tokens_in", 0);
    s.tokens_out = j.value("tokens_out", 0);
    s.wall_ms = j.value("wall_ms", 0);
}

inline void to_json(Json& j, const Feedback& f) {
    j = Json{{"score", f.score}, {"case_studies", f.case_studies}, {"failed", f.failed}, {"exec_stats", f.exec_stats}};
}

inline void from_json(const Json& j, Feedback& f) {
    f.score = j.at("score").get<double>();
    f.case_studies = j.value("case_studies", std::vector<CaseStudy>{});
    f.failed = j.value("failed", false);
    f.exec_stats = j.value("exec_stats", ExecStats{});
    f.validate();
}

inline void to_json(Json& j, const HistoryEntry& e) { j = Json{{"program", e.program}, {"feedback", e.feedback}}; }

inline void from_json(const Json& j, HistoryEntry& e) {
    e.program = j.at("program").get<WorkflowProgram>();
    e.feedback = j.at("feedback").get<Feedback>();
}

inline void to_json(Json& j, const OptimizationState& s) {
    j = Json{{"instructions", s.instructions},
             {"task", s.task},
             {"window_history", s.window_history},
             {"window_best", score_to_json(s.window_best)},
             {"window_turns", s.window_turns}};
}

inline void from_json(const Json& j, OptimizationState& s) {
    s.instructions = j.at("instructions").get<std::string>();
    s.task = j.at("task").get<TaskSpec>();
    s.window_history = j.at("window_history").get<std::vector<HistoryEntry>>();
    s.window_best = score_from_json(j.at("window_best"));
    s.window_turns = j.value("window_turns", 0);
}

inline void to_json(Json& j, const TrajectoryStep& s) {
    j = Json{{"state_render", s.state_render},
             {"action_text", s.action_text},
             {"reward", s.reward},
             {"score", s.score},
             {"iteration", s.iteration},
             {"candidate", s.candidate}};
}

inline void from_json(const Json& j, TrajectoryStep& s) {
    s.state_render = j.at("state_render").get<std::string>();
    s.action_text = j.at("action_text").get<std::string>();
    s.reward = j.at("reward").get<double>();
    s.score = j.at("score").get<double>();
    s.iteration = j.value("iteration", 0);
    s.candidate = j.value("candidate", 0);
}

inline void to_json(Json& j, const Trajectory& t) {
    j = Json{{"id", t.id}, {"task", t.task_id}, {"steps", t.steps}, {"provenance", t.provenance}};
}

inline void from_json(const Json& j, Trajectory& t) {
    t.id = j.at("id").get<std::string>();
    t.task_id = j.value("task", "");
    t.steps = j.at("steps").get<std::vector<TrajectoryStep>>();
    t.provenance = j.at("provenance").get<Provenance>();
    t.validate();
}

}  // namespace w4s
