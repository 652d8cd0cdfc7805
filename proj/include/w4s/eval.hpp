#pragma once

#include "w4s/dataset.hpp"
#include "w4s/metrics.hpp"
#include "w4s/sandbox.hpp"
#include "w4s/self_correction.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

namespace w4s {

// Tests a code prediction must pass: the sample's public tests plus the gold
// test script when one is present.
inline std::vector<std::string> pass_at_1_tests(const Sample& sample) {
    std::vector<std::string> tests = sample.public_tests;
    if (!trim(sample.gold).empty()) tests.push_back(sample.gold);
    return tests;
}

inline double score_sample(const TaskSpec& task, const std::string& prediction, const Sample& sample,
                           const CodeRunner* runner) {
    switch (task.metric) {
        case Metric::accuracy: return accuracy_score(prediction, sample.gold);
        case Metric::token_f1: return token_f1(prediction, sample.gold);
        case Metric::pass_at_1: {
            if (task.family != TaskFamily::code) throw Error(ErrorKind::NotACodeTask, "pass_at_1 needs a code task");
            if (!runner) throw Error(ErrorKind::ConfigError, "pass_at_1 scoring needs a code runner");
            const auto tests = pass_at_1_tests(sample);
            if (tests.empty()) return 0.0;
            for (const auto& outcome : runner->run_tests(prediction, tests)) {
                if (!outcome.passed) return 0.0;
            }
            return 1.0;
        }
    }
    return 0.0;
}

struct SampleResult {
    std::string sample_id;
    std::string prediction;  // canonical answer, or the error report when the invocation failed
    double score = 0.0;
    std::optional<WorkflowError> error;
    ExecStats stats;
    std::vector<HelperCallRecord> helper_calls;
};

// Runs the program on every sample with up to `workers` concurrent
// invocations. Results come back in sample order regardless of timing.
inline std::vector<SampleResult> run_samples(const WorkflowProgram& program, const TaskSpec& task,
                                             const std::vector<Sample>& samples, WorkflowExecutor& executor,
                                             const CodeRunner* runner, const std::string& invocation_prefix,
                                             int workers) {
    std::vector<SampleResult> results(samples.size());
    std::atomic<std::size_t> next{0};
    std::mutex failure_mu;
    std::exception_ptr failure;
    auto run_one = [&](std::size_t i) {
        const Sample& s = samples[i];
        WorkflowResult run = executor.execute(program, task, s, invocation_prefix + std::to_string(i));
        SampleResult& r = results[i];
        r.sample_id = s.id;
        r.stats = run.stats();
        r.helper_calls = std::move(run.helper_calls);
        if (run.ok()) {
            r.prediction = run.answer;
            r.score = score_sample(task, run.answer, s, runner);
        } else {
            r.error = run.error();
            r.prediction = "Error: " + run.error().kind + (run.error().message.empty() ? "" : ": " + run.error().message);
        }
    };
    auto work = [&] {
        try {
            for (std::size_t i = next.fetch_add(1); i < samples.size(); i = next.fetch_add(1)) run_one(i);
        } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
            next = samples.size();
        }
    };
    const auto n = static_cast<std::size_t>(std::max(1, workers));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(n, samples.size()); ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return results;
}

inline double mean_score(const std::vector<SampleResult>& results) {
    if (results.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : results) sum += r.score;
    return sum / static_cast<double>(results.size());
}

struct EvaluationOutcome {
    Feedback feedback;
    std::vector<SampleResult> private_results;
    std::vector<SampleResult> public_results;
};

struct EvalOptions {
    int workers = 4;
    int case_study_k = 3;
    std::uint64_t seed = 0;
};

// Score v over the private split; case studies are up to k seeded picks
// among the public split's failures.
inline EvaluationOutcome evaluate_workflow(const WorkflowProgram& program, const TaskSpec& task,
                                           const std::vector<Sample>& private_val, const std::vector<Sample>& public_val,
                                           WorkflowExecutor& executor, const CodeRunner* runner,
                                           const std::string& invocation_prefix, const EvalOptions& opts,
                                           const RecordLog& log = {}) {
    EvaluationOutcome out;
    out.private_results =
        run_samples(program, task, private_val, executor, runner, invocation_prefix + "-priv", opts.workers);
    out.public_results = run_samples(program, task, public_val, executor, runner, invocation_prefix + "-pub", opts.workers);

    Feedback& fb = out.feedback;
    fb.score = mean_score(out.private_results);
    bool any_ok = false;
    for (const auto* part : {&out.private_results, &out.public_results}) {
        for (const auto& r : *part) {
            fb.exec_stats += r.stats;
            any_ok = any_ok || !r.error;
            if (log) {
                for (const auto& rec : r.helper_calls) log(rec);
            }
        }
    }
    fb.failed = !any_ok;

    std::vector<std::size_t> failures;
    for (std::size_t i = 0; i < out.public_results.size(); ++i) {
        if (out.public_results[i].score < 1.0) failures.push_back(i);
    }
    Rng rng(derive_seed(opts.seed, "case_studies/" + invocation_prefix));
    rng.shuffle(failures);
    const auto k = std::min(failures.size(), static_cast<std::size_t>(std::max(0, opts.case_study_k)));
    for (std::size_t j = 0; j < k; ++j) {
        const Sample& s = public_val[failures[j]];
        std::string gold = s.gold;
        if (task.family == TaskFamily::code && trim(gold).empty()) {
            for (const auto& t : s.public_tests) gold += (gold.empty() ? "" : "\n") + t;
        }
        fb.case_studies.push_back({s.input, out.public_results[failures[j]].prediction, gold});
    }
    return out;
}

struct EvalReport {
    Split split = Split::test;
    std::vector<SampleResult> per_sample;
    double aggregate = 0.0;
    ExecStats exec_stats;
};

inline Json eval_report_to_json(const EvalReport& r) {
    Json rows = Json::array();
    for (const auto& s : r.per_sample) {
        Json row{{"id", s.sample_id}, {"prediction", s.prediction}, {"score", s.score}};
        if (s.error) row["error_kind"] = s.error->kind;
        rows.push_back(std::move(row));
    }
    const ExecStats& stats = r.exec_stats;
    return Json{{"schema_version", 1},
                {"split", r.split},
                {"aggregate", r.aggregate},
                {"n", r.per_sample.size()},
                {"exec_stats", {{"calls", stats.calls}, {"tokens_in", stats.tokens_in}, {"tokens_out", stats.tokens_out}}},
                {"per_sample", rows}};
}

// Rebuilds the aggregate from persisted rows.
inline double aggregate_from_json(const Json& report) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : report.at("per_sample")) {
        sum += row.at("score").get<double>();
        ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

inline std::string csv_field(std::string_view v) {
    if (v.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(v);
    return "\"" + replace_all(std::string(v), "\"", "\"\"") + "\"";
}

inline std::string eval_report_csv(const EvalReport& r) {
    std::string out = "id,score,prediction\n";
    for (const auto& s : r.per_sample)
        out += csv_field(s.sample_id) + "," + shortest_double(s.score) + "," + csv_field(s.prediction) + "\n";
    return out;
}

// Final held-out evaluation. The optimization loop never holds test samples.
inline EvalReport evaluate_on_test(const WorkflowProgram& program, const TaskSpec& task,
                                   const std::vector<Sample>& test_split, WorkflowExecutor& executor,
                                   const CodeRunner* runner, int workers, const RecordLog& log = {}) {
    EvalReport report;
    report.split = Split::test;
    report.per_sample = run_samples(program, task, test_split, executor, runner, "test-", workers);
    report.aggregate = mean_score(report.per_sample);
    for (const auto& r : report.per_sample) {
        report.exec_stats += r.stats;
        if (log) {
            for (const auto& rec : r.helper_calls) log(rec);
        }
    }
    return report;
}

}  // namespace w4s
