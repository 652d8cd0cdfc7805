#pragma once

#include "w4s/w4s.hpp"

#include <map>
#include <string>
#include <vector>

namespace w4s::testing {

inline std::vector<std::string> runtime_command() {
    return {W4S_PYTHON, "-I", "-S", std::string(W4S_SOURCE_DIR) + "/tools/w4s_runtime.py"};
}

// A lookup-table workflow: answers `task` from a fixed table, "wrong"
// otherwise. Valid Python for the real runtime and readable by FakeExecutor.
inline std::string table_program(const std::map<std::string, std::string>& table, const std::string& tag = "") {
    std::string src = "def workflow(agent, task):\n";
    if (!tag.empty()) src += "    # " + tag + "\n";
    src += "    table = " + Json(table).dump() + "\n";
    src += "    return {\"answer\": table.get(task, \"wrong\")}\n";
    return src;
}

inline std::string raising_program(const std::string& kind, const std::string& tag = "") {
    std::string src = "def workflow(agent, task):\n";
    if (!tag.empty()) src += "    # " + tag + "\n";
    src += "    raise " + kind + "(\"boom\")\n";
    return src;
}

inline std::string as_response(const std::string& analysis, const std::string& program) {
    const std::string body = program.ends_with('\n') ? program : program + "\n";
    return analysis + "\n\n```python\n" + body + "```\n";
}

// Runs table/raising programs in-process, so property tests can execute
// thousands of invocations quickly.
class FakeExecutor final : public WorkflowExecutor {
public:
    WorkflowResult execute(const WorkflowProgram& program, const TaskSpec&, const Sample& sample,
                           const std::string&) override {
        const std::string& src = program.source;
        if (const auto r = src.find("    raise "); r != std::string::npos) {
            const auto start = r + 10;
            const auto paren = src.find('(', start);
            return WorkflowResult::failure(src.substr(start, paren - start), "boom");
        }
        const auto t = src.find("table = ");
        if (t == std::string::npos) return WorkflowResult::failure("NameError", "name 'table' is not defined");
        const auto eol = src.find('\n', t);
        const Json table = Json::parse(src.substr(t + 8, eol - t - 8));
        WorkflowResult r;
        const Json answer{{"answer", table.value(sample.input, std::string("wrong"))}};
        r.answer = validate_answer_dict(answer);
        r.outcome = answer;
        return r;
    }
};

struct QaSplits {
    TaskSpec task;
    std::vector<Sample> private_val;
    std::vector<Sample> public_val;
    std::vector<Sample> test;
};

inline QaSplits qa_splits(int n_private = 4, int n_public = 4, int n_test = 4) {
    QaSplits s;
    s.task.id = "toyqa";
    s.task.family = TaskFamily::qa;
    s.task.metric = Metric::accuracy;
    s.task.description_text = "Answer the question with the matching code word.";
    s.task.answer_schema = "a single word";
    auto make = [](const std::string& prefix, int n, Split split) {
        std::vector<Sample> out;
        for (int i = 0; i < n; ++i) {
            Sample x;
            x.id = prefix + std::to_string(i);
            x.input = "question " + prefix + std::to_string(i);
            x.gold = "ans" + prefix + std::to_string(i);
            x.split = split;
            out.push_back(x);
        }
        return out;
    };
    s.private_val = make("p", n_private, Split::private_val);
    s.public_val = make("u", n_public, Split::public_val);
    s.test = make("t", n_test, Split::test);
    return s;
}

// Program scoring correct/n_private on the private split (first `correct`
// samples right) and all-wrong on the public split.
inline std::string program_with_score(const QaSplits& s, int correct, const std::string& tag = "") {
    std::map<std::string, std::string> table;
    for (int i = 0; i < correct; ++i) table[s.private_val[static_cast<std::size_t>(i)].input] = s.private_val[static_cast<std::size_t>(i)].gold;
    return table_program(table, tag);
}

inline Json scenario_step(const std::vector<std::string>& responses, const std::string& expect = "") {
    Json step{{"responses", responses}};
    if (!expect.empty()) step["expect_contains"] = expect;
    return step;
}

// Scripted responses for a run where candidate (it, k) has the given
// private-split accuracy, or raises when negative. Failing candidates are
// followed by three failing correction replies, matching the call order.
inline Json scripted_steps(const QaSplits& s, const std::vector<std::vector<int>>& correct) {
    Json steps = Json::array();
    for (std::size_t it = 0; it < correct.size(); ++it) {
        std::vector<std::string> responses;
        Json corrections = Json::array();
        for (std::size_t k = 0; k < correct[it].size(); ++k) {
            const std::string tag = "i" + std::to_string(it + 1) + "k" + std::to_string(k);
            const int c = correct[it][k];
            responses.push_back(as_response("analysis " + tag,
                                            c < 0 ? raising_program("KeyError", tag) : program_with_score(s, c, tag)));
            if (c < 0) {
                for (int a = 1; a <= 3; ++a)
                    corrections.push_back(
                        scenario_step({as_response("fix", raising_program("KeyError", tag + "f" + std::to_string(a)))},
                                      "KeyError"));
            }
        }
        steps.push_back(scenario_step(responses));
        for (auto& c : corrections) steps.push_back(c);
    }
    return steps;
}

// Loop wiring for in-process runs; backends are supplied by the caller.
inline LoopContext loop_context(const QaSplits& s, ChatBackend& meta, WorkflowExecutor& executor, int iterations, int m = 5) {
    LoopContext ctx;
    ctx.config.iterations = iterations;
    ctx.config.m = m;
    ctx.config.workers = 2;
    ctx.config.meta_backend.scenario_path = "inline";
    ctx.config.executor_backend.scenario_path = "inline";
    ctx.task = s.task;
    ctx.private_val = s.private_val;
    ctx.public_val = s.public_val;
    ctx.meta = &meta;
    ctx.executor = &executor;
    return ctx;
}

inline void write_dataset_file(const std::filesystem::path& path, const QaSplits& s) {
    Dataset ds;
    for (const auto* part : {&s.private_val, &s.public_val, &s.test}) ds.samples.insert(ds.samples.end(), part->begin(), part->end());
    write_dataset(ds, path);
}

}  // namespace w4s::testing
