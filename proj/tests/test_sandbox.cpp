#include "support.hpp"

#include <gtest/gtest.h>

#include <dirent.h>
#include <unistd.h>

#include <fstream>

using namespace w4s;

namespace {

Scenario executor_scenario() {
    const std::string fixed = "```python\ndef add(a, b):\n    return a + b\n```";
    return Scenario::from_json(Json{
        {"executor",
         {{"rules",
           {{{"contains", "You are a Math Solver"}, {"responses", {"42"}}},
            {{"contains", {"Python Programmer", "fails some public tests"}}, {"responses", {fixed}}},
            {{"contains", "always broken"}, {"responses", {"not json at all"}}},
            {{"contains", "extra keys"}, {"responses", {"{\"answer\": \"7\", \"confidence\": 0.9}"}}},
            {{"contains", "multiple choice"}, {"responses", {"```json\n{\"reasoning\": \"r\", \"answer\": \"C\"}\n```"}}},
            {{"contains", "write add"},
             {"responses", {"```python\ndef add(a, b):\n    return a - b\n```"}}}}},
          {"default", {"default reply"}}}}});
}

TaskSpec qa_task() {
    TaskSpec t;
    t.id = "qa";
    t.family = TaskFamily::qa;
    t.description_text = "Answer.";
    return t;
}

TaskSpec code_task() {
    TaskSpec t;
    t.id = "mbpp";
    t.family = TaskFamily::code;
    t.metric = Metric::pass_at_1;
    t.entry_point = "add";
    t.description_text = "Write code.";
    return t;
}

Sample qa_sample(const std::string& input = "what is six times seven") {
    return Sample{"s0", input, "42", {}, Split::public_val};
}

Sample code_sample() {
    return Sample{"c0", "write add(a, b) returning the sum", "assert add(2, 2) == 4", {"assert add(1, 2) == 3"},
                  Split::public_val};
}

WorkflowProgram prog(const std::string& body, bool entry = false) {
    return validate_workflow_program(std::string("def workflow(agent, task") + (entry ? ", entry_point" : "") +
                                     "):\n" + body);
}

struct Fixture {
    MockExecutorBackend executor{executor_scenario()};
    CodeRunner runner{W4S_PYTHON, 3000};
    LiveHelperService helpers{executor, runner};
    SandboxOptions opts = [] {
        SandboxOptions o;
        o.runtime_command = w4s::testing::runtime_command();
        o.workflow_timeout_ms = 20000;
        return o;
    }();

    WorkflowResult run(const WorkflowProgram& p, const TaskSpec& t, const Sample& s, const std::string& id = "inv") {
        SandboxHost host(opts, helpers);
        return host.execute(p, t, s, id);
    }
};

std::vector<pid_t> child_pids() {
    std::vector<pid_t> out;
    const pid_t self = ::getpid();
    DIR* d = ::opendir("/proc");
    if (!d) return out;
    while (dirent* e = ::readdir(d)) {
        const std::string name = e->d_name;
        if (name.empty() || !std::isdigit(static_cast<unsigned char>(name[0]))) continue;
        std::ifstream f("/proc/" + name + "/stat");
        std::string stat;
        std::getline(f, stat);
        const auto close = stat.rfind(')');
        if (close == std::string::npos) continue;
        std::istringstream rest(stat.substr(close + 2));
        char state = 0;
        pid_t ppid = 0;
        rest >> state >> ppid;
        if (ppid == self) out.push_back(static_cast<pid_t>(std::stoi(name)));
    }
    ::closedir(d);
    return out;
}

}  // namespace

TEST(Sandbox, AnswerPassesThrough) {
    Fixture f;
    const auto r = f.run(prog("    print('chatter on stdout')\n    return {'answer': task.upper(), 'why': 'x'}\n"), qa_task(),
                         qa_sample("abc"));
    ASSERT_TRUE(r.ok()) << r.error().report();
    EXPECT_EQ(r.answer, "ABC");
    EXPECT_EQ(std::get<Json>(r.outcome)["why"], "x");
    EXPECT_TRUE(r.helper_calls.empty());
}

TEST(Sandbox, NumericAnswerIsCoerced) {
    Fixture f;
    const auto r = f.run(prog("    return {'answer': 3.0}\n"), qa_task(), qa_sample());
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.answer, "3.0");
}

TEST(Sandbox, TimeoutWithinBudget) {
    Fixture f;
    f.opts.workflow_timeout_ms = 1000;
    const auto t0 = Clock::now();
    const auto r = f.run(prog("    while True:\n        pass\n"), qa_task(), qa_sample());
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error().kind, "Timeout");
    EXPECT_LT(elapsed, 1000 + 2000);
    EXPECT_TRUE(child_pids().empty());
}

TEST(Sandbox, ContractViolations) {
    Fixture f;
    auto r = f.run(prog("    return {'result': 1}\n"), qa_task(), qa_sample());
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error().kind, "ContractViolation");
    EXPECT_TRUE(contains(r.error().message, "MissingAnswerKey"));
    r = f.run(prog("    return {'answer': [1, 2]}\n"), qa_task(), qa_sample());
    EXPECT_EQ(r.error().kind, "ContractViolation");
    r = f.run(prog("    return 'plain'\n"), qa_task(), qa_sample());
    EXPECT_EQ(r.error().kind, "ContractViolation");
}

TEST(Sandbox, ExceptionsBecomeErrorFrames) {
    Fixture f;
    auto r = f.run(prog("    x = 1\n    return {'answer': undefined_name}\n"), qa_task(), qa_sample());
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error().kind, "NameError");
    EXPECT_TRUE(contains(r.error().message, "undefined_name"));
    EXPECT_TRUE(contains(r.error().trace, "<workflow>"));
    EXPECT_TRUE(contains(r.error().trace, "line 3"));
    EXPECT_FALSE(contains(r.error().trace, "w4s_runtime.py"));

    r = f.run(prog("    return agent.no_such_helper()\n"), qa_task(), qa_sample());
    EXPECT_EQ(r.error().kind, "UnknownHelper");

    r = f.run(validate_workflow_program("def workflow(agent, task):\n    return {'answer': 1\n"), qa_task(), qa_sample());
    EXPECT_EQ(r.error().kind, "SyntaxError");
}

TEST(Sandbox, RuntimeCrashAndUnavailable) {
    Fixture f;
    auto r = f.run(prog("    import os\n    os._exit(3)\n"), qa_task(), qa_sample());
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error().kind, "RuntimeCrash");
    EXPECT_TRUE(contains(r.error().message, "status 3"));

    f.opts.runtime_command = {"/nonexistent/runtime"};
    r = f.run(prog("    return {'answer': 1}\n"), qa_task(), qa_sample());
    EXPECT_EQ(r.error().kind, "RuntimeUnavailable");
}

TEST(Sandbox, PolicyDenylistRefusesBeforeSpawning) {
    Fixture f;
    f.opts.runtime_command = {"/nonexistent/runtime"};
    const auto r = f.run(prog("    import subprocess\n    return {'answer': subprocess.run(['ls'])}\n"), qa_task(), qa_sample());
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error().kind, "PolicyViolation");
    EXPECT_FALSE(unsafe_patterns("import os\nos.system('ls')").empty());
    EXPECT_FALSE(unsafe_patterns("__import__('socket')").empty());
    EXPECT_TRUE(unsafe_patterns("import math\nimport re\nx = 'subprocess is a word'").empty());
}

TEST(Sandbox, OversizedFrameIsProtocolViolation) {
    Fixture f;
    const auto r = f.run(prog("    return {'answer': agent.extract_answer_str('x' * 5000000)}\n"), qa_task(), qa_sample());
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error().kind, "ProtocolViolation");
}

TEST(Sandbox, HelperBudget) {
    Fixture f;
    f.opts.max_helper_calls = 5;
    const auto r = f.run(prog("    for i in range(10):\n        agent.extract_answer_str('answer is 1')\n"
                              "    return {'answer': 'done'}\n"),
                         qa_task(), qa_sample());
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error().kind, "HelperBudgetExceeded");
    EXPECT_EQ(r.helper_calls.size(), 6u);
}

TEST(Helpers, CallLlmUsesRoleAsSystemPrompt) {
    Fixture f;
    const auto r = f.run(prog("    out = agent.call_llm([{'role': 'user', 'content': task}], 0.5, 2, 'Math Solver', '')\n"
                              "    return {'answer': out[0], 'n': len(out)}\n"),
                         qa_task(), qa_sample());
    ASSERT_TRUE(r.ok()) << r.error().report();
    EXPECT_EQ(r.answer, "42");
    EXPECT_EQ(std::get<Json>(r.outcome)["n"], 2);
    ASSERT_EQ(r.helper_calls.size(), 1u);
    const auto& rec = r.helper_calls[0];
    EXPECT_EQ(rec.method, "call_llm");
    EXPECT_EQ(rec.invocation_id, "inv");
    EXPECT_EQ(rec.sequence_no, 0);
    EXPECT_EQ(rec.request["args"]["agent_role"], "Math Solver");
    EXPECT_EQ(r.stats().calls, 1);
    EXPECT_GT(r.stats().tokens_in, 0);
}

TEST(Helpers, JsonFormatFallbackFillsMissingKeys) {
    Fixture f;
    const auto r = f.run(
        prog("    out = agent.call_json_format_llm([{'role': 'user', 'content': 'always broken'}], 0.0, 1, 'Solver',"
             " ['reasoning', 'answer'], '')\n"
             "    return {'answer': repr(sorted(out[0].items())), 'n': len(out)}\n"),
        qa_task(), qa_sample());
    ASSERT_TRUE(r.ok()) << r.error().report();
    EXPECT_EQ(r.answer, "[('answer', ''), ('reasoning', '')]");
    EXPECT_EQ(r.stats().calls, 2);  // original plus one repair

    const auto extra = f.run(
        prog("    out = agent.call_json_format_llm('extra keys please', 0.0, 1, 'Solver', ['answer'], '')\n"
             "    return {'answer': out[0]['answer'], 'conf': out[0]['confidence']}\n"),
        qa_task(), qa_sample());
    ASSERT_TRUE(extra.ok()) << extra.error().report();
    EXPECT_EQ(extra.answer, "7");
    EXPECT_EQ(extra.stats().calls, 1);
}

TEST(Helpers, ExecuteCode) {
    Fixture f;
    auto r = f.run(prog("    return {'answer': agent.execute_code('def solution():\\n    return 6 * 7\\n')}\n"), qa_task(),
                   qa_sample());
    ASSERT_TRUE(r.ok()) << r.error().report();
    EXPECT_EQ(r.answer, "42");

    r = f.run(prog("    return {'answer': agent.execute_code('x = 1')}\n"), qa_task(), qa_sample());
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error().kind, "MissingSolutionFunction");

    r = f.run(prog("    return {'answer': agent.execute_code('def solution():\\n    while True:\\n        pass\\n')}\n"),
              qa_task(), qa_sample());
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error().kind, "NestedTimeout");

    r = f.run(prog("    try:\n        agent.execute_code('def solution():\\n    return 1 / 0\\n')\n"
                   "    except Exception as e:\n        return {'answer': type(e).__name__}\n"),
              qa_task(), qa_sample());
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.answer, "ZeroDivisionError");
}

TEST(Helpers, ExtractHelpers) {
    Fixture f;
    const auto r = f.run(
        prog("    a = agent.extract_answer_str('so \\\\boxed{12}')\n"
             "    c = agent.extract_code_block('```python\\ndef solution():\\n    return 1\\n```', 'solution')\n"
             "    return {'answer': a, 'code': c}\n"),
        qa_task(), qa_sample());
    ASSERT_TRUE(r.ok()) << r.error().report();
    EXPECT_EQ(r.answer, "12");
    EXPECT_EQ(std::get<Json>(r.outcome)["code"], "def solution():\n    return 1");
}

TEST(Helpers, TestOnPublicTestRepairs) {
    Fixture f;
    const auto r = f.run(prog("    res = agent.test_on_public_test(task, 'def add(a, b):\\n    return a - b\\n', entry_point, 3)\n"
                              "    return {'answer': res['solution'], 'passed': res['result']}\n",
                              true),
                         code_task(), code_sample());
    ASSERT_TRUE(r.ok()) << r.error().report();
    EXPECT_TRUE(std::get<Json>(r.outcome)["passed"].get<bool>());
    EXPECT_TRUE(contains(r.answer, "a + b"));
    EXPECT_EQ(r.stats().calls, 1);

    const auto qa = f.run(prog("    return {'answer': agent.test_on_public_test(task, 'x', 'f', 1)}\n"), qa_task(), qa_sample());
    ASSERT_FALSE(qa.ok());
    EXPECT_EQ(qa.error().kind, "NotACodeTask");
}

TEST(Workflows, CodeStyle) {
    Fixture f;
    const auto r = f.run(prog("    draft = agent.call_llm([{'role': 'user', 'content': task}], 0.5, 1, 'Python Expert', '')[0]\n"
                              "    code = agent.extract_code_block(draft, entry_point)\n"
                              "    res = agent.test_on_public_test(task, code, entry_point, 2)\n"
                              "    return {'answer': res['solution']}\n",
                              true),
                         code_task(), code_sample());
    ASSERT_TRUE(r.ok()) << r.error().report();
    EXPECT_TRUE(contains(r.answer, "return a + b"));
    EXPECT_EQ(r.helper_calls.size(), 3u);
    EXPECT_EQ(r.stats().calls, 2);
}

TEST(Workflows, MultipleChoiceStyle) {
    Fixture f;
    const auto r = f.run(prog("    votes = agent.call_json_format_llm([{'role': 'user', 'content': 'multiple choice: ' + task}],"
                              " 0.7, 3, 'Expert', ['reasoning', 'answer'], 'Think step by step.')\n"
                              "    letters = [v['answer'] for v in votes]\n"
                              "    return {'answer': max(set(letters), key=letters.count)}\n"),
                         qa_task(), qa_sample());
    ASSERT_TRUE(r.ok()) << r.error().report();
    EXPECT_EQ(r.answer, "C");
}

TEST(Replay, ReproducesResultWithoutBackends) {
    Fixture f;
    const auto p = prog("    import random\n"
                        "    pick = random.randint(0, 10 ** 9)\n"
                        "    a = agent.call_llm([{'role': 'user', 'content': task}], 0.5, 1, 'Math Solver', '')[0]\n"
                        "    b = agent.execute_code('def solution():\\n    return 1 + 1\\n')\n"
                        "    return {'answer': a + '/' + str(b) + '/' + str(pick)}\n");
    const auto live = f.run(p, qa_task(), qa_sample(), "i1-k0-priv0");
    ASSERT_TRUE(live.ok()) << live.error().report();

    std::vector<HelperCallRecord> stored;
    for (const auto& rec : live.helper_calls) stored.push_back(Json::parse(Json(rec).dump()).get<HelperCallRecord>());
    ReplayHelperService replay(stored);
    SandboxHost host(f.opts, replay);
    const auto again = host.execute(p, qa_task(), qa_sample(), "i1-k0-priv0");
    ASSERT_TRUE(again.ok()) << again.error().report();
    EXPECT_EQ(again.answer, live.answer);
    EXPECT_EQ(std::get<Json>(again.outcome), std::get<Json>(live.outcome));
    ASSERT_EQ(again.helper_calls.size(), live.helper_calls.size());
    for (std::size_t i = 0; i < live.helper_calls.size(); ++i) {
        EXPECT_EQ(again.helper_calls[i].response, live.helper_calls[i].response);
        EXPECT_EQ(again.helper_calls[i].request, live.helper_calls[i].request);
    }

    // A different invocation id has nothing recorded.
    const auto other = host.execute(p, qa_task(), qa_sample(), "i1-k0-priv1");
    ASSERT_FALSE(other.ok());
    EXPECT_EQ(other.error().kind, "ReplayMismatch");
}

TEST(Sandbox, HundredInvocationsLeaveNoChildren) {
    Fixture f;
    // Answers, raises and hard exits, four at a time.
    const std::vector<std::string> bodies = {"    return {'answer': task}\n", "    raise ValueError(task)\n",
                                             "    import os\n    os._exit(3)\n"};
    std::vector<std::thread> threads;
    std::atomic<int> answered{0}, raised{0}, crashed{0};
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            SandboxHost host(f.opts, f.helpers);
            for (int j = 0; j < 25; ++j) {
                const int i = t * 25 + j;
                const auto r = host.execute(prog(bodies[static_cast<std::size_t>(i % 3)]), qa_task(),
                                            qa_sample(std::to_string(i)), "inv" + std::to_string(i));
                if (r.ok() && r.answer == std::to_string(i)) ++answered;
                else if (!r.ok() && r.error().kind == "ValueError") ++raised;
                else if (!r.ok() && r.error().kind == "RuntimeCrash") ++crashed;
            }
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(answered.load(), 34);
    EXPECT_EQ(raised.load(), 33);
    EXPECT_EQ(crashed.load(), 33);
    EXPECT_TRUE(child_pids().empty());
}

TEST(CodeRunner, RunsTestsIndividually) {
    CodeRunner runner(W4S_PYTHON, 3000);
    const auto out = runner.run_tests("def f(x):\n    return x * 2\n",
                                      {"assert f(2) == 4", "assert f(3) == 7", "raise ValueError('bad')"});
    ASSERT_EQ(out.size(), 3u);
    EXPECT_TRUE(out[0].passed);
    EXPECT_FALSE(out[1].passed);
    EXPECT_EQ(out[1].kind, "AssertionError");
    EXPECT_EQ(out[2].kind, "ValueError");
    const auto broken = runner.run_tests("def f(:\n", {"assert True"});
    EXPECT_EQ(broken[0].kind, "SyntaxError");
}
