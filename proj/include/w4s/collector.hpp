#pragma once

#include "w4s/config.hpp"
#include "w4s/eval.hpp"
#include "w4s/self_correction.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace w4s {

// ---- reward ------------------------------------------------------------------

// 1 for beating the window's best, 0.5 for beating only the previous score,
// otherwise 0. Strict comparisons throughout; v_max may be kNoScore.
inline double compute_reward(double v, std::optional<double> v_prev, double v_max) {
    if (v > v_max) return 1.0;
    if (v_prev && v > *v_prev) return 0.5;
    return 0.0;
}

inline double rwr_weight(double reward, double tau) {
    if (!(tau > 0.0)) throw Error(ErrorKind::NonpositiveTau, "tau must be > 0, got " + shortest_double(tau));
    return std::exp(reward / tau);
}

// ---- per-iteration records -------------------------------------------------------

struct CandidateRecord {
    int index = 0;
    std::string raw_response;
    std::optional<AgentAction> action;  // the probed (possibly corrected) action; absent when skipped
    std::optional<Feedback> feedback;   // absent iff skipped
    std::optional<double> reward;
    bool selected = false;
    bool filtered = false;
    int correction_prompts = 0;
    std::vector<std::string> error_reports;
    ExecStats cost;  // wall time excluded

    bool skipped() const { return !feedback.has_value(); }
    bool viable() const { return feedback.has_value() && !filtered; }
    double score() const { return feedback ? feedback->score : 0.0; }
};

inline void to_json(Json& j, const CandidateRecord& c) {
    j = Json{{"index", c.index},
             {"raw_response", c.raw_response},
             {"action", c.action ? Json(*c.action) : Json(nullptr)},
             {"feedback", c.feedback ? Json(*c.feedback) : Json(nullptr)},
             {"reward", c.reward ? Json(*c.reward) : Json(nullptr)},
             {"selected", c.selected},
             {"filtered", c.filtered},
             {"skipped", c.skipped()},
             {"correction_prompts", c.correction_prompts},
             {"error_reports", c.error_reports},
             {"cost", c.cost}};
}

inline void from_json(const Json& j, CandidateRecord& c) {
    c.index = j.at("index").get<int>();
    c.raw_response = j.at("raw_response").get<std::string>();
    c.action.reset();
    c.feedback.reset();
    c.reward.reset();
    if (!j.at("action").is_null()) c.action = j["action"].get<AgentAction>();
    if (!j.at("feedback").is_null()) c.feedback = j["feedback"].get<Feedback>();
    if (!j.at("reward").is_null()) c.reward = j["reward"].get<double>();
    c.selected = j.at("selected").get<bool>();
    c.filtered = j.at("filtered").get<bool>();
    c.correction_prompts = j.value("correction_prompts", 0);
    c.error_reports = j.value("error_reports", std::vector<std::string>{});
    c.cost = j.value("cost", ExecStats{});
}

struct IterationRecord {
    int iteration = 0;  // 1-based
    int window = 0;     // 0-based truncation window
    int turn = 1;       // 1 or 2 within the window
    std::string context;  // the rendered state (user prompt) the candidates were sampled from
    std::optional<double> v_prev;
    double v_max = kNoScore;
    std::vector<CandidateRecord> candidates;
    std::optional<int> selected;
    double best_so_far = 0.0;
    ExecStats cost;
};

inline void to_json(Json& j, const IterationRecord& r) {
    j = Json{{"iteration", r.iteration},
             {"window", r.window},
             {"turn", r.turn},
             {"context", r.context},
             {"v_prev", r.v_prev ? Json(*r.v_prev) : Json(nullptr)},
             {"v_max", score_to_json(r.v_max)},
             {"candidates", r.candidates},
             {"selected", r.selected ? Json(*r.selected) : Json(nullptr)},
             {"best_so_far", r.best_so_far},
             {"cost", r.cost}};
}

inline void from_json(const Json& j, IterationRecord& r) {
    r.iteration = j.at("iteration").get<int>();
    r.window = j.at("window").get<int>();
    r.turn = j.at("turn").get<int>();
    r.context = j.at("context").get<std::string>();
    r.v_prev.reset();
    r.selected.reset();
    if (!j.at("v_prev").is_null()) r.v_prev = j["v_prev"].get<double>();
    r.v_max = score_from_json(j.at("v_max"));
    r.candidates = j.at("candidates").get<std::vector<CandidateRecord>>();
    if (!j.at("selected").is_null()) r.selected = j["selected"].get<int>();
    r.best_so_far = j.at("best_so_far").get<double>();
    r.cost = j.value("cost", ExecStats{});
}

// Highest score among viable candidates; ties go to the lowest index.
inline int select_best(const std::vector<CandidateRecord>& candidates) {
    std::optional<int> best;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        if (!candidates[k].viable()) continue;
        if (!best || candidates[k].score() > candidates[static_cast<std::size_t>(*best)].score())
            best = static_cast<int>(k);
    }
    if (!best) throw Error(ErrorKind::NoViableCandidate, "no candidate survived probing and filtering");
    return *best;
}

// Marks rewards, filtering and the selection. All candidates share the
// pre-iteration (v_prev, v_max).
inline void score_candidates(std::vector<CandidateRecord>& candidates, std::optional<double> v_prev, double v_max,
                             std::optional<double> filter_threshold) {
    const double floor = filter_threshold.value_or(-std::numeric_limits<double>::infinity());
    for (auto& c : candidates) {
        c.selected = false;
        c.filtered = false;
        c.reward.reset();
        if (c.skipped()) continue;
        c.reward = compute_reward(c.feedback->score, v_prev, v_max);
        c.filtered = c.feedback->score < floor;
    }
    try {
        candidates[static_cast<std::size_t>(select_best(candidates))].selected = true;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoViableCandidate) throw;
    }
}

// ---- one iteration ----------------------------------------------------------------

// Everything an iteration needs. The optimization loop only ever sees the
// validation splits.
struct LoopContext {
    RunConfig config;
    TaskSpec task;
    std::vector<Sample> private_val;
    std::vector<Sample> public_val;
    ChatBackend* meta = nullptr;
    WorkflowExecutor* executor = nullptr;
    const CodeRunner* code_runner = nullptr;
    PromptTemplates templates;
    std::string helper_docs = std::string(templates::kHelperDocs);
    RenderOptions render;
    RecordLog log;

    const Sample& probe_sample() const {
        if (public_val.empty()) throw Error(ErrorKind::DatasetMissing, "public validation split is empty");
        return public_val.front();
    }

    EvalOptions eval_options() const { return {config.workers, config.case_study_k, config.seed}; }
};

// Samples n candidates from the state prompt, probes and corrects each, and
// evaluates the survivors. Candidates run one after another so the
// meta-agent sees a deterministic call order; samples within an evaluation
// run in parallel.
inline std::vector<CandidateRecord> sample_candidates(LoopContext& ctx, const MessageList& state_prompt, int iteration,
                                                      int n, double temperature, ExecStats& cost) {
    Completion completion = ctx.meta->complete(state_prompt, temperature, n);
    cost.calls += 1;
    cost.tokens_in += completion.tokens_in;
    cost.tokens_out += completion.tokens_out;
    std::vector<CandidateRecord> out;
    for (int k = 0; k < n; ++k) {
        CandidateRecord c;
        c.index = k;
        c.raw_response = completion.texts.at(static_cast<std::size_t>(k));
        const std::string prefix = "i" + std::to_string(iteration) + "-k" + std::to_string(k);
        ProbeOutcome probe = probe_and_correct(c.raw_response, state_prompt, *ctx.meta, temperature, *ctx.executor,
                                               ctx.task, ctx.probe_sample(), ctx.templates, prefix, ctx.log);
        c.correction_prompts = probe.correction_prompts;
        c.error_reports = probe.error_reports;
        c.cost = probe.cost;
        if (probe.action) {
            EvaluationOutcome eval = evaluate_workflow(probe.action->program, ctx.task, ctx.private_val, ctx.public_val,
                                                       *ctx.executor, ctx.code_runner, prefix, ctx.eval_options(), ctx.log);
            ExecStats stats = eval.feedback.exec_stats;
            stats.wall_ms = 0;
            c.cost += stats;
            c.action = std::move(probe.action);
            if (!eval.feedback.failed) c.feedback = std::move(eval.feedback);
        }
        cost += c.cost;
        out.push_back(std::move(c));
    }
    return out;
}

// ---- trajectories --------------------------------------------------------------------

inline std::string trajectory_id(const std::string& task_id, int iteration, int candidate) {
    return task_id + "/i" + std::to_string(iteration) + "/k" + std::to_string(candidate);
}

inline TrajectoryStep make_step(const IterationRecord& it, const CandidateRecord& c) {
    TrajectoryStep s;
    s.state_render = it.context;
    s.action_text = c.raw_response;
    s.reward = c.reward.value_or(0.0);
    s.score = c.score();
    s.iteration = it.iteration;
    s.candidate = c.index;
    return s;
}

// Per window of two iterations: every viable unselected candidate becomes a
// one-turn trajectory on the state it was sampled from, and the two selected
// candidates form one two-turn trajectory. A selected candidate without a
// selected partner in the same window is dropped along with skipped and
// filtered ones.
inline std::vector<Trajectory> assemble_trajectories(const std::vector<IterationRecord>& iterations,
                                                     const std::string& task_id) {
    std::vector<Trajectory> out;
    std::size_t i = 0;
    while (i < iterations.size()) {
        const IterationRecord* first = &iterations[i];
        const IterationRecord* second = nullptr;
        if (i + 1 < iterations.size() && iterations[i + 1].window == first->window) second = &iterations[i + 1];
        if (first->turn == 2) {
            second = first;
            first = nullptr;
        }
        i += (first && second) ? 2 : 1;

        const CandidateRecord* sel1 = nullptr;
        const CandidateRecord* sel2 = nullptr;
        for (const IterationRecord* it : {first, second}) {
            if (!it) continue;
            const Provenance prov = it == first ? Provenance::unselected_turn1 : Provenance::unselected_turn2;
            for (const auto& c : it->candidates) {
                if (!c.viable()) continue;
                if (c.selected) {
                    (it == first ? sel1 : sel2) = &c;
                    continue;
                }
                Trajectory t;
                t.id = trajectory_id(task_id, it->iteration, c.index);
                t.task_id = task_id;
                t.provenance = prov;
                t.steps.push_back(make_step(*it, c));
                out.push_back(std::move(t));
            }
        }
        if (sel1 && sel2) {
            Trajectory t;
            t.id = task_id + "/w" + std::to_string(first->window) + "/pair";
            t.task_id = task_id;
            t.provenance = Provenance::selected_pair;
            t.steps.push_back(make_step(*first, *sel1));
            t.steps.push_back(make_step(*second, *sel2));
            out.push_back(std::move(t));
        }
    }
    return out;
}

// ---- RWR export -----------------------------------------------------------------------

struct RwrRecord {
    std::string trajectory_id;
    int turn = 1;
    std::string context;
    std::string target;
    double reward = 0.0;
    double weight = 1.0;
    std::string task;
    int iteration = 0;
    int candidate = 0;
    Provenance provenance = Provenance::unselected_turn1;
};

inline void to_json(Json& j, const RwrRecord& r) {
    j = Json{{"trajectory_id", r.trajectory_id},
             {"turn", r.turn},
             {"context", r.context},
             {"target", r.target},
             {"reward", r.reward},
             {"weight", r.weight},
             {"meta", {{"task", r.task}, {"iteration", r.iteration}, {"candidate", r.candidate}, {"provenance", r.provenance}}}};
}

inline void from_json(const Json& j, RwrRecord& r) {
    r.trajectory_id = j.at("trajectory_id").get<std::string>();
    r.turn = j.at("turn").get<int>();
    r.context = j.at("context").get<std::string>();
    r.target = j.at("target").get<std::string>();
    r.reward = j.at("reward").get<double>();
    r.weight = j.at("weight").get<double>();
    const Json& m = j.at("meta");
    r.task = m.at("task").get<std::string>();
    r.iteration = m.at("iteration").get<int>();
    r.candidate = m.at("candidate").get<int>();
    r.provenance = m.at("provenance").get<Provenance>();
}

// One record per (trajectory, turn), ordered by (task, iteration, candidate, turn).
inline std::vector<RwrRecord> rwr_records(const std::vector<Trajectory>& trajectories, double tau) {
    std::vector<RwrRecord> out;
    for (const auto& t : trajectories) {
        for (std::size_t s = 0; s < t.steps.size(); ++s) {
            const TrajectoryStep& step = t.steps[s];
            RwrRecord r;
            r.trajectory_id = t.id;
            r.turn = static_cast<int>(s) + 1;
            r.context = step.state_render;
            r.target = step.action_text;
            r.reward = step.reward;
            r.weight = rwr_weight(step.reward, tau);
            r.task = t.task_id;
            r.iteration = step.iteration;
            r.candidate = step.candidate;
            r.provenance = t.provenance;
            if (r.context.empty() || r.target.empty())
                throw Error(ErrorKind::InvalidValue, "empty context or target in " + t.id);
            out.push_back(std::move(r));
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const RwrRecord& a, const RwrRecord& b) {
        return std::tie(a.task, a.iteration, a.candidate, a.turn) < std::tie(b.task, b.iteration, b.candidate, b.turn);
    });
    return out;
}

inline constexpr int kRwrSchemaVersion = 1;

struct RwrDataset {
    Json header;
    std::vector<RwrRecord> records;
};

// Header line first, then one JSON record per line. Nothing is written for
// an empty trajectory list.
inline RwrDataset export_dataset(const std::vector<Trajectory>& trajectories, double tau, const std::string& config_hash,
                                 const std::string& system_prompt, const std::filesystem::path& path) {
    if (trajectories.empty()) throw Error(ErrorKind::EmptyDataset, "no trajectories to export");
    RwrDataset ds;
    ds.records = rwr_records(trajectories, tau);
    std::size_t one = 0;
    std::size_t two = 0;
    for (const auto& t : trajectories) (t.steps.size() == 2 ? two : one) += 1;
    ds.header = Json{{"schema_version", kRwrSchemaVersion},
                     {"tau", tau},
                     {"config_hash", config_hash},
                     {"counts", {{"trajectories", trajectories.size()},
                                 {"one_turn", one},
                                 {"two_turn", two},
                                 {"records", ds.records.size()}}},
                     {"system_prompt", system_prompt}};
    std::string out = ds.header.dump() + "\n";
    for (const auto& r : ds.records) out += Json(r).dump() + "\n";
    try {
        write_text_file(path, out);
    } catch (const std::exception& e) {
        throw Error(ErrorKind::IoFailure, e.what());
    }
    return ds;
}

inline RwrDataset load_rwr_dataset(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::IoFailure, "dataset not found: " + path.string());
    RwrDataset ds;
    bool first = true;
    for (const auto& line : read_lines(path)) {
        if (trim(line).empty()) continue;
        Json j = Json::parse(line);
        if (first) {
            if (!j.contains("schema_version")) throw Error(ErrorKind::IoFailure, "missing header line");
            ds.header = std::move(j);
            first = false;
            continue;
        }
        ds.records.push_back(j.get<RwrRecord>());
    }
    if (first) throw Error(ErrorKind::IoFailure, "empty dataset file");
    return ds;
}

}  // namespace w4s
