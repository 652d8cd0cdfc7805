#include "support.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <set>

using namespace w4s;

namespace {

void expect_kind(ErrorKind kind, const std::function<void()>& fn) {
    try {
        fn();
        ADD_FAILURE() << "expected " << to_string(kind);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

template <typename T>
void expect_round_trip(const T& value) {
    const Json j = value;
    const T back = Json::parse(j.dump()).get<T>();
    EXPECT_EQ(Json(back), j);
}

}  // namespace

TEST(ValidateWorkflowProgram, AcceptsTwoParameterEntry) {
    const auto p = validate_workflow_program("def workflow(agent, task):\n    return {'answer': '1'}\n");
    EXPECT_FALSE(p.takes_entry_point);
    EXPECT_EQ(p.correction_attempts, 0);
}

TEST(ValidateWorkflowProgram, AcceptsThreeParameterEntry) {
    const auto p = validate_workflow_program("def workflow(agent, task: str, entry_point: str):\n    pass\n");
    EXPECT_TRUE(p.takes_entry_point);
}

TEST(ValidateWorkflowProgram, RejectsEmptyAndMissingEntry) {
    expect_kind(ErrorKind::EmptySource, [] { validate_workflow_program(""); });
    expect_kind(ErrorKind::EmptySource, [] { validate_workflow_program("  \n\t"); });
    expect_kind(ErrorKind::MissingEntryFunction, [] { validate_workflow_program("def solve(agent, task):\n    pass\n"); });
    expect_kind(ErrorKind::MissingEntryFunction, [] { validate_workflow_program("def workflow(agent):\n    pass\n"); });
    expect_kind(ErrorKind::InvalidValue,
                [] { validate_workflow_program("def workflow(a, t):\n pass\n", ProgramOrigin::corrected, 4); });
}

TEST(ValidateAnswerDict, CoercesScalars) {
    EXPECT_EQ(validate_answer_dict(Json{{"answer", "42"}, {"reasoning", "..."}}), "42");
    EXPECT_EQ(validate_answer_dict(Json{{"answer", 3.0}}), "3.0");
    EXPECT_EQ(validate_answer_dict(Json{{"answer", 7}}), "7");
    EXPECT_EQ(validate_answer_dict(Json{{"answer", 0.1}}), "0.1");
    EXPECT_EQ(validate_answer_dict(Json{{"answer", true}}), "True");
    EXPECT_EQ(validate_answer_dict(Json{{"answer", nullptr}}), "None");
}

TEST(ValidateAnswerDict, RejectsContractViolations) {
    expect_kind(ErrorKind::MissingAnswerKey, [] { validate_answer_dict(Json{{"reasoning", "..."}}); });
    expect_kind(ErrorKind::MissingAnswerKey, [] { validate_answer_dict(Json("42")); });
    expect_kind(ErrorKind::NonCoercibleValue, [] { validate_answer_dict(Json{{"answer", Json::array({1, 2})}}); });
    expect_kind(ErrorKind::NonCoercibleValue, [] { validate_answer_dict(Json{{"answer", Json{{"x", 1}}}}); });
}

TEST(TaskSpec, CodeMetricAndEntryPointGoTogether) {
    TaskSpec t;
    t.id = "mbpp";
    t.description_text = "Write code.";
    t.family = TaskFamily::code;
    t.metric = Metric::pass_at_1;
    t.entry_point = "solution";
    EXPECT_NO_THROW(t.validate());
    t.entry_point.reset();
    EXPECT_THROW(t.validate(), Error);
    t.entry_point = "solution";
    t.metric = Metric::accuracy;
    EXPECT_THROW(t.validate(), Error);
    t.family = TaskFamily::qa;
    t.entry_point.reset();
    t.description_text = "";
    EXPECT_THROW(t.validate(), Error);
}

TEST(Sample, ValidatesPerFamily) {
    Sample s;
    s.input = "q";
    EXPECT_THROW(s.validate(TaskFamily::qa), Error);
    s.gold = "a";
    EXPECT_NO_THROW(s.validate(TaskFamily::qa));
    EXPECT_THROW(s.validate(TaskFamily::code), Error);
    s.public_tests = {"assert True"};
    EXPECT_NO_THROW(s.validate(TaskFamily::code));
}

TEST(Feedback, ScoreMustBeInUnitInterval) {
    Feedback f;
    f.score = 1.2;
    EXPECT_THROW(f.validate(), Error);
    f.score = -0.1;
    EXPECT_THROW(f.validate(), Error);
    f.score = 0.5;
    EXPECT_NO_THROW(f.validate());
}

TEST(Trajectory, LengthTwoIffSelectedPair) {
    Trajectory t;
    t.steps.resize(1);
    t.provenance = Provenance::unselected_turn1;
    EXPECT_NO_THROW(t.validate());
    t.provenance = Provenance::selected_pair;
    EXPECT_THROW(t.validate(), Error);
    t.steps.resize(2);
    EXPECT_NO_THROW(t.validate());
    t.steps[1].reward = 0.7;
    EXPECT_THROW(t.validate(), Error);
}

TEST(Serialization, EveryTypeRoundTrips) {
    TaskSpec task;
    task.id = "gsm";
    task.family = TaskFamily::math;
    task.description_text = "Solve.";
    task.answer_schema = "number";
    task.dataset_ref = "data.jsonl";
    expect_round_trip(task);

    Sample sample{"s1", "2+2?", "4", {"assert f() == 4"}, Split::public_val};
    expect_round_trip(sample);

    WorkflowProgram program = validate_workflow_program("def workflow(a, t, e):\n pass\n", ProgramOrigin::corrected, 2);
    expect_round_trip(program);

    AgentAction action{"because", program, "because\n```python\n...```"};
    expect_round_trip(action);

    Feedback fb;
    fb.score = 0.75;
    fb.case_studies = {{"in", "model", "gold"}};
    fb.exec_stats = {3, 100, 50, 12};
    expect_round_trip(fb);

    OptimizationState state;
    state.instructions = "sys";
    state.task = task;
    expect_round_trip(state);
    state.window_history.push_back({program, fb});
    state.window_best = 0.75;
    state.window_turns = 1;
    expect_round_trip(state);
    const OptimizationState back = Json::parse(Json(state).dump()).get<OptimizationState>();
    EXPECT_EQ(back, state);

    Trajectory traj;
    traj.id = "t";
    traj.task_id = "gsm";
    traj.provenance = Provenance::selected_pair;
    traj.steps = {{"ctx1", "act1", 1.0, 0.7, 1, 0}, {"ctx2", "act2", 0.5, 0.6, 2, 3}};
    expect_round_trip(traj);
}

TEST(OptimizationState, EmptyBestIsSentinelAndSurvivesJson) {
    OptimizationState s;
    EXPECT_EQ(s.window_best, kNoScore);
    EXPECT_EQ(s.recomputed_best(), kNoScore);
    const auto back = Json::parse(Json(s).dump()).get<OptimizationState>();
    EXPECT_EQ(back.window_best, kNoScore);
}

TEST(DatasetSplit, DeterministicDisjointExhaustive) {
    std::vector<Sample> val;
    for (int i = 0; i < 128; ++i) val.push_back({"v" + std::to_string(i), "q" + std::to_string(i), "a", {}, Split::private_val});
    const auto [priv, pub] = split_validation(val, 0.5, 7);
    EXPECT_EQ(priv.size(), 64u);
    EXPECT_EQ(pub.size(), 64u);
    const auto [priv2, pub2] = split_validation(val, 0.5, 7);
    EXPECT_EQ(Json(priv), Json(priv2));
    EXPECT_EQ(Json(pub), Json(pub2));
    std::set<std::string> ids;
    for (const auto& s : priv) ids.insert(s.id);
    for (const auto& s : pub) ids.insert(s.id);
    EXPECT_EQ(ids.size(), 128u);
    for (const auto& s : priv) EXPECT_EQ(s.split, Split::private_val);
    for (const auto& s : pub) EXPECT_EQ(s.split, Split::public_val);
    const auto [priv3, pub3] = split_validation(val, 0.5, 8);
    EXPECT_NE(Json(priv), Json(priv3));
}

TEST(DatasetSplit, TooFewSamples) {
    expect_kind(ErrorKind::TooFewSamples, [] { split_validation({Sample{"a", "q", "g", {}, Split::private_val}}, 0.5, 0); });
}

TEST(DatasetLoad, MissingFileAndUnsplitRows) {
    expect_kind(ErrorKind::DatasetMissing, [] { load_dataset("/nonexistent/data.jsonl", TaskFamily::qa); });
    ScratchDir dir("w4s-test");
    const auto path = dir.path() / "d.jsonl";
    std::string text;
    for (int i = 0; i < 6; ++i) text += Json{{"input", "q" + std::to_string(i)}, {"gold", "g"}, {"split", "validation"}}.dump() + "\n";
    text += Json{{"input", "t"}, {"gold", "g"}, {"split", "test"}}.dump() + "\n";
    write_text_file(path, text);
    const auto splits = load_task_splits(path, TaskFamily::qa, 0.5, 3);
    EXPECT_EQ(splits.private_val.size(), 3u);
    EXPECT_EQ(splits.public_val.size(), 3u);
    EXPECT_EQ(splits.test.size(), 1u);
    EXPECT_EQ(splits.test[0].id, "s7");
}
