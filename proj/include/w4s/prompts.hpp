#pragma once

#include "w4s/domain.hpp"
#include "w4s/extract.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace w4s {

enum class Role { system, user, assistant };

NLOHMANN_JSON_SERIALIZE_ENUM(Role, {{Role::system, "system"}, {Role::user, "user"}, {Role::assistant, "assistant"}})

struct Message {
    Role role = Role::user;
    std::string content;

    friend bool operator==(const Message&, const Message&) = default;
};

inline void to_json(Json& j, const Message& m) { j = Json{{"role", m.role}, {"content", m.content}}; }
inline void from_json(const Json& j, Message& m) {
    m.role = j.at("role").get<Role>();
    m.content = j.at("content").get<std::string>();
}

using MessageList = std::vector<Message>;

inline void validate_messages(const MessageList& messages) {
    if (messages.empty() || messages.front().role != Role::system)
        throw Error(ErrorKind::InvalidValue, "message list must start with a system message");
    for (const auto& m : messages) {
        if (m.content.empty()) throw Error(ErrorKind::InvalidValue, "message content is empty");
    }
}

// Stable digest of a conversation, used by the mock backend and the call log.
inline std::string messages_hash(const MessageList& messages) {
    std::uint64_t h = fnv1a64("");
    for (const auto& m : messages) {
        h = fnv1a64(Json(m.role).get<std::string>(), h);
        h = fnv1a64(std::string_view("\x1f", 1), h);
        h = fnv1a64(m.content, h);
        h = fnv1a64(std::string_view("\x1e", 1), h);
    }
    return hex64(h);
}

namespace templates {

inline constexpr std::string_view kSystem =
    R"(You design and refine agent workflows: Python programs that orchestrate calls to a stronger language model to solve a task.

Each turn you receive the workflows tried so far, each with its validation score and a few samples it got wrong. Study that feedback, work out which ideas helped and which did not, and write an improved workflow. Prefer changes you can justify from the evidence, keep what already works, and try new prompting or decomposition strategies when the evidence suggests the current approach has stalled.)";

inline constexpr std::string_view kMain = R"(## Workflow contract
Write `workflow(agent, task: str) -> dict`.
- `task` is the problem text.
- Return a dict with an "answer" key; its value is compared as a string.
- Helpers available on `agent`:
[APIs]

## Task
[TASK]

## Previous workflows
Oldest first. Each entry shows the program under 'system code' and its results under 'eval_feedback', including sampled validation failures.

[HISTORY]

## Response format
Start with your analysis, then give the complete new workflow in one Python code block:
```python
def workflow(agent, task: str):
    # imports and helper functions go inside this function
    return {"answer": ...}
```)";

inline constexpr std::string_view kCorrection = R"(The workflow failed during evaluation with this error:
[ERROR]

Do not add try/except blocks: fix the cause of the error rather than suppressing it.

Explain what went wrong and what you changed, then give the full corrected workflow in one Python code block:
```python
def workflow(agent, task: str):
    return {"answer": ...}
```)";

inline constexpr std::string_view kHelperDocs = R"(
+ `agent.call_llm(messages, temperature, num_of_response, agent_role, instructions)`: queries the executor model; returns a list of `num_of_response` strings.

+ `agent.call_json_format_llm(messages, temperature, num_of_response, agent_role, return_dict_keys, instructions)`: like `call_llm`, but each reply is parsed into a dict with exactly the keys in `return_dict_keys` (missing keys are empty strings).

+ `agent.execute_code(code)`: runs `code` in a fresh interpreter and returns what its `solution()` function returns; raises if the code fails or has no `solution` function.

+ `agent.extract_answer_str(response)`: pulls the final numeric or LaTeX answer out of a model reply.

+ `agent.extract_code_block(response, entry_point='solution')`: returns the code block in a model reply that defines `entry_point`.

+ `agent.test_on_public_test(task, solution_code, entry_point, test_loop)`: runs the code against the task's public tests, asking the model for a fix after each failure, at most `test_loop` times; returns a dict with `result` (bool), `solution` (final code) and `feedback` (str).
)";

inline constexpr std::string_view kEmptyHistory = "(no prior systems)";
inline constexpr std::string_view kEmptyError = "(no message captured)";
inline constexpr std::string_view kTruncationMarker = "...[truncated]";

}  // namespace templates

struct PromptTemplates {
    std::string system{templates::kSystem};
    std::string main{templates::kMain};
    std::string correction{templates::kCorrection};

    void validate() const {
        for (std::string_view ph : {"[APIs]", "[TASK]", "[HISTORY]"}) {
            if (!contains(main, ph))
                throw Error(ErrorKind::TemplateMissingPlaceholder, "main template lacks " + std::string(ph));
        }
        if (!contains(correction, "[ERROR]"))
            throw Error(ErrorKind::TemplateMissingPlaceholder, "correction template lacks [ERROR]");
        if (trim(system).empty()) throw Error(ErrorKind::TemplateMissingPlaceholder, "system template is empty");
    }
};

// Reads system.txt, main.txt and correction.txt from `dir`.
inline PromptTemplates load_templates(const std::filesystem::path& dir) {
    PromptTemplates t;
    t.system = read_text_file(dir / "system.txt");
    t.main = read_text_file(dir / "main.txt");
    t.correction = read_text_file(dir / "correction.txt");
    t.validate();
    return t;
}

struct RenderOptions {
    std::size_t case_input_budget = 1500;
    std::size_t case_answer_budget = 500;
};

// Single pass so substituted text is never re-scanned for placeholders.
inline std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        bool replaced = false;
        if (tmpl[i] == '[') {
            for (const auto& [key, value] : values) {
                if (tmpl.substr(i, key.size()) == key) {
                    out += value;
                    i += key.size();
                    replaced = true;
                    break;
                }
            }
        }
        if (!replaced) out.push_back(tmpl[i++]);
    }
    return out;
}

inline std::string truncate_with_marker(std::string_view text, std::size_t budget) {
    if (text.size() <= budget) return std::string(text);
    const std::size_t marker = templates::kTruncationMarker.size();
    if (budget <= marker) return utf8_prefix(templates::kTruncationMarker, budget);
    return utf8_prefix(text, budget - marker) + std::string(templates::kTruncationMarker);
}

inline std::string fence_program(std::string_view source) {
    return "```python\n" + std::string(source) + "\n```";
}

inline std::string render_history_entry(std::size_t index, const HistoryEntry& entry, const RenderOptions& opts) {
    std::string out = "#### Agentic system " + std::to_string(index + 1) + "\n";
    out += "system code:\n" + fence_program(entry.program.source) + "\n";
    out += "eval_feedback:\nValidation accuracy: " + fixed3(entry.feedback.score) + "\n";
    if (entry.feedback.case_studies.empty()) {
        out += "Case studies: (none)\n";
        return out;
    }
    out += "Case studies:\n";
    for (std::size_t k = 0; k < entry.feedback.case_studies.size(); ++k) {
        const auto& cs = entry.feedback.case_studies[k];
        out += "[Case " + std::to_string(k + 1) + "]\n";
        out += "Input: " + truncate_with_marker(cs.input, opts.case_input_budget) + "\n";
        out += "Model answer: " + truncate_with_marker(cs.model_answer, opts.case_answer_budget) + "\n";
        out += "Correct answer: " + truncate_with_marker(cs.gold_answer, opts.case_answer_budget) + "\n";
    }
    return out;
}

inline std::string render_history(const std::vector<HistoryEntry>& history, const RenderOptions& opts) {
    if (history.empty()) return std::string(templates::kEmptyHistory);
    std::string out;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (i) out += "\n";
        out += render_history_entry(i, history[i], opts);
    }
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

// system = instructions (the system prompt); user = main prompt with the
// helper docs, task text and in-window history substituted, oldest first.
inline MessageList render_state_prompt(const OptimizationState& state, std::string_view helper_docs,
                                       const PromptTemplates& tmpl = {}, const RenderOptions& opts = {}) {
    tmpl.validate();
    const std::string user = fill_template(tmpl.main, {{"[APIs]", std::string(helper_docs)},
                                                       {"[TASK]", state.task.description_text},
                                                       {"[HISTORY]", render_history(state.window_history, opts)}});
    const std::string system = state.instructions.empty() ? tmpl.system : state.instructions;
    return {{Role::system, system}, {Role::user, user}};
}

inline std::string escape_fences(std::string_view text) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.substr(i, 3) == "```") {
            std::size_t j = i;
            while (j < text.size() && text[j] == '`') ++j;
            out.append(j - i, '\'');
            i = j;
        } else {
            out.push_back(text[i++]);
        }
    }
    return out;
}

// Appends the assistant turn that produced the failing program and the
// correction request. The full chain of earlier corrections stays in
// `conversation`.
inline MessageList render_correction_prompt(MessageList conversation, std::string_view assistant_reply,
                                            std::string_view error_report, const PromptTemplates& tmpl = {}) {
    const std::string error = trim(error_report).empty() ? std::string(templates::kEmptyError)
                                                         : escape_fences(error_report);
    if (!trim(assistant_reply).empty()) conversation.push_back({Role::assistant, std::string(assistant_reply)});
    conversation.push_back({Role::user, fill_template(tmpl.correction, {{"[ERROR]", error}})});
    return conversation;
}

inline MessageList render_correction_prompt(MessageList conversation, const WorkflowProgram& program,
                                            std::string_view error_report, const PromptTemplates& tmpl = {}) {
    return render_correction_prompt(std::move(conversation), fence_program(program.source), error_report, tmpl);
}

// analysis = text before the first fence; program = the last fenced block
// that declares `workflow`.
inline AgentAction parse_action(std::string_view response_text, ProgramOrigin origin = ProgramOrigin::generated) {
    const auto blocks = fenced_blocks(response_text);
    if (blocks.empty()) throw Error(ErrorKind::NoCodeBlock, "response contains no fenced code block");
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        if (!defines_function(it->content, "workflow")) continue;
        AgentAction action;
        action.analysis = trim(response_text.substr(0, blocks.front().fence_offset));
        action.program = validate_workflow_program(it->content, origin);
        action.raw_response = std::string(response_text);
        return action;
    }
    throw Error(ErrorKind::MissingEntryFunction, "no fenced code block defines `workflow`");
}

}  // namespace w4s
