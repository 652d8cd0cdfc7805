#pragma once

#include "w4s/collector.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace w4s {

enum class Mode { infer, collect };

NLOHMANN_JSON_SERIALIZE_ENUM(Mode, {{Mode::infer, "infer"}, {Mode::collect, "collect"}})

inline OptimizationState init_state(std::string instructions, TaskSpec task,
                                    std::optional<HistoryEntry> seed = std::nullopt) {
    OptimizationState s;
    s.instructions = std::move(instructions);
    s.task = std::move(task);
    if (seed) {
        seed->feedback.validate();
        if (seed->feedback.failed) throw Error(ErrorKind::FailedFeedback, "seed feedback is marked failed");
        s.window_best = seed->feedback.score;
        s.window_history.push_back(std::move(*seed));
    }
    return s;
}

inline OptimizationState transition(const OptimizationState& state, const AgentAction& action, const Feedback& feedback,
                                    int horizon = 2) {
    if (feedback.failed) throw Error(ErrorKind::FailedFeedback, "failed feedback never enters the history");
    feedback.validate();
    if (state.window_turns >= horizon)
        throw Error(ErrorKind::WindowFull, "window already holds " + std::to_string(horizon) + " turns; reset first");
    OptimizationState next = state;
    next.window_history.push_back({action.program, feedback});
    next.window_best = std::max(state.window_best, feedback.score);
    ++next.window_turns;
    return next;
}

// Start of a new truncation window. Without a carried entry this is s1;
// otherwise the carried (program, feedback) is the only history and the
// window's best restarts from its score.
inline OptimizationState reset_window(const OptimizationState& initial, std::optional<HistoryEntry> carried) {
    if (!carried) return initial;
    OptimizationState s;
    s.instructions = initial.instructions;
    s.task = initial.task;
    s.window_best = carried->feedback.score;
    s.window_history.push_back(std::move(*carried));
    return s;
}

struct BestProgram {
    WorkflowProgram program;
    double score = 0.0;
    int iteration = 0;  // 0 for the seed
    int candidate = 0;
};

struct RunArtifacts {
    Mode mode = Mode::infer;
    std::optional<BestProgram> best;
    std::optional<HistoryEntry> seed;
    std::vector<IterationRecord> iterations;
    std::vector<double> global_best_curve;
    std::vector<Trajectory> trajectories;
    bool early_stopped = false;

    double best_score() const { return global_best_curve.empty() ? 0.0 : global_best_curve.back(); }
};

using IterationObserver = std::function<void(const IterationRecord&, const OptimizationState&)>;

// Evaluates a user-supplied seed program W0 without self-correction.
inline HistoryEntry evaluate_seed(LoopContext& ctx, WorkflowProgram program) {
    program.origin = ProgramOrigin::seed;
    EvaluationOutcome eval = evaluate_workflow(program, ctx.task, ctx.private_val, ctx.public_val, *ctx.executor,
                                               ctx.code_runner, "seed", ctx.eval_options(), ctx.log);
    if (eval.feedback.failed)
        throw Error(ErrorKind::ConfigError, "seed workflow failed on every validation sample");
    return {std::move(program), std::move(eval.feedback)};
}

// The iterate-execute-refine loop. Infer mode samples one action per
// iteration; collect mode samples m and advances with the best. Iterations
// whose candidates all fail self-correction are skipped but still consume
// their index.
inline RunArtifacts run_optimization(LoopContext& ctx, Mode mode, std::optional<WorkflowProgram> seed_program = std::nullopt,
                                     const IterationObserver& observer = {}) {
    const RunConfig& cfg = ctx.config;
    cfg.validate();
    if (ctx.private_val.empty()) throw Error(ErrorKind::DatasetMissing, "private validation split is empty");
    (void)ctx.probe_sample();

    RunArtifacts art;
    art.mode = mode;
    if (seed_program) {
        art.seed = evaluate_seed(ctx, std::move(*seed_program));
        art.best = BestProgram{art.seed->program, art.seed->feedback.score, 0, 0};
    }
    const OptimizationState initial = init_state(ctx.templates.system, ctx.task, art.seed);
    OptimizationState state = initial;
    double best = art.best ? art.best->score : 0.0;
    int stale = 0;

    const int n = mode == Mode::infer ? 1 : cfg.m;
    const double temperature = mode == Mode::infer ? cfg.meta_temperature_infer : cfg.meta_temperature_collect;
    std::optional<double> threshold;
    if (mode == Mode::collect) threshold = cfg.filter_threshold;

    for (int it = 1; it <= cfg.iterations; ++it) {
        IterationRecord rec;
        rec.iteration = it;
        rec.window = (it - 1) / cfg.horizon;
        rec.turn = (it - 1) % cfg.horizon + 1;
        if (rec.turn == 1 && it > 1) {
            std::optional<HistoryEntry> carried;
            if (!state.window_history.empty()) carried = state.window_history.back();
            state = reset_window(initial, std::move(carried));
        }
        const MessageList prompt = render_state_prompt(state, ctx.helper_docs, ctx.templates, ctx.render);
        rec.context = prompt.back().content;
        rec.v_prev = state.last_score();
        rec.v_max = state.window_best;
        rec.candidates = sample_candidates(ctx, prompt, it, n, temperature, rec.cost);
        score_candidates(rec.candidates, rec.v_prev, rec.v_max, threshold);

        const double before = best;
        for (const auto& c : rec.candidates) {
            if (!c.selected) continue;
            rec.selected = c.index;
            state = transition(state, *c.action, *c.feedback, cfg.horizon);
            if (!art.best || c.feedback->score > best) {
                best = std::max(best, c.feedback->score);
                art.best = BestProgram{c.action->program, c.feedback->score, it, c.index};
            }
        }
        rec.best_so_far = best;
        art.global_best_curve.push_back(best);
        art.iterations.push_back(rec);
        if (observer) observer(art.iterations.back(), state);

        stale = best > before ? 0 : stale + 1;
        if (cfg.early_stop_patience > 0 && stale >= cfg.early_stop_patience && it < cfg.iterations) {
            art.early_stopped = true;
            break;
        }
    }
    if (!art.best)
        throw Error(ErrorKind::SeedlessAllFailed, "every iteration was skipped and no seed workflow was given");
    art.trajectories = assemble_trajectories(art.iterations, ctx.task.id);
    return art;
}

}  // namespace w4s
