#pragma once

#include "w4s/engine.hpp"

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace w4s {

namespace fs = std::filesystem;

inline constexpr int kReportSchemaVersion = 1;

// Thread-safe, append-only log of every backend interaction in a run.
class RunLog {
public:
    void push(const HelperCallRecord& rec) {
        std::lock_guard lock(mu_);
        records_.push_back(rec);
    }

    std::vector<HelperCallRecord> records() const {
        std::lock_guard lock(mu_);
        return records_;
    }

    RecordLog sink() {
        return [this](const HelperCallRecord& r) { push(r); };
    }

private:
    mutable std::mutex mu_;
    std::vector<HelperCallRecord> records_;
};

inline std::string jsonl(const std::vector<Json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    return out;
}

inline void write_helper_log(const fs::path& path, const std::vector<HelperCallRecord>& records) {
    std::string out;
    for (const auto& r : records) out += Json(r).dump() + "\n";
    write_text_file(path, out);
}

inline std::vector<HelperCallRecord> read_helper_log(const fs::path& path) {
    std::vector<HelperCallRecord> out;
    for (const auto& line : read_lines(path)) {
        if (!trim(line).empty()) out.push_back(Json::parse(line).get<HelperCallRecord>());
    }
    return out;
}

inline void write_trajectories(const fs::path& path, const std::vector<Trajectory>& trajectories) {
    std::string out;
    for (const auto& t : trajectories) out += Json(t).dump() + "\n";
    write_text_file(path, out);
}

inline std::vector<Trajectory> read_trajectories(const fs::path& path) {
    std::vector<Trajectory> out;
    for (const auto& line : read_lines(path)) {
        if (!trim(line).empty()) out.push_back(Json::parse(line).get<Trajectory>());
    }
    return out;
}

inline fs::path iteration_dir(const fs::path& run_dir, int iteration) {
    return run_dir / "iterations" / std::to_string(iteration);
}

inline void write_iteration(const fs::path& run_dir, const IterationRecord& rec) {
    const fs::path dir = iteration_dir(run_dir, rec.iteration);
    for (const auto& c : rec.candidates) {
        const fs::path cdir = dir / ("candidate_" + std::to_string(c.index));
        write_text_file(cdir / "action.txt", c.raw_response);
        if (c.action) write_text_file(cdir / "workflow.src", c.action->program.source);
        Json fb = c.feedback ? Json(*c.feedback) : Json{{"skipped", true}, {"error_reports", c.error_reports}};
        write_text_file(cdir / "feedback.json", stable_dump(fb));
    }
    write_text_file(dir / "iteration.json", stable_dump(Json(rec)));
}

// Writes everything except report.json. `config` is the run's full CLI
// configuration.
inline void write_run(const fs::path& run_dir, const Json& config, const RunArtifacts& art,
                      const std::vector<HelperCallRecord>& log) {
    write_text_file(run_dir / "config.json", stable_dump(config));
    for (const auto& rec : art.iterations) write_iteration(run_dir, rec);
    write_trajectories(run_dir / "trajectories.jsonl", art.trajectories);
    write_helper_log(run_dir / "helper_log.jsonl", log);
    Json status{{"complete", true},
                {"mode", art.mode},
                {"iterations_run", art.iterations.size()},
                {"early_stopped", art.early_stopped},
                {"global_best_curve", art.global_best_curve},
                {"seed_score", art.seed ? Json(art.seed->feedback.score) : Json(nullptr)}};
    if (art.best) {
        status["best"] = Json{{"score", art.best->score},
                              {"iteration", art.best->iteration},
                              {"candidate", art.best->candidate},
                              {"program", art.best->program}};
        write_text_file(run_dir / "best_workflow.src", art.best->program.source);
    }
    write_text_file(run_dir / "run.json", stable_dump(status));
}

inline std::vector<IterationRecord> read_iterations(const fs::path& run_dir, std::size_t count) {
    std::vector<IterationRecord> out;
    for (std::size_t i = 1; i <= count; ++i) {
        const fs::path p = iteration_dir(run_dir, static_cast<int>(i)) / "iteration.json";
        if (!fs::exists(p)) throw Error(ErrorKind::IncompleteRun, "missing " + p.string());
        out.push_back(read_json_file(p).get<IterationRecord>());
    }
    return out;
}

inline Json read_run_status(const fs::path& run_dir) {
    const fs::path p = run_dir / "run.json";
    if (!fs::exists(p) || !fs::exists(run_dir / "config.json"))
        throw Error(ErrorKind::IncompleteRun, "run directory " + run_dir.string() + " has no completed run");
    Json status = read_json_file(p);
    if (!status.value("complete", false)) throw Error(ErrorKind::IncompleteRun, "run did not complete");
    return status;
}

inline std::int64_t record_api_calls(const HelperCallRecord& r) {
    if (r.method == "meta.complete") return 1;
    return r.request.value("api_calls", std::int64_t{0});
}

struct Report {
    Json json;
    std::string curve_csv;
};

// Derived purely from persisted files, so report, replay and tests agree on
// one source of truth. Wall-clock values are deliberately left out.
inline Report build_report(const fs::path& run_dir, const fs::path& eval_dir) {
    const Json status = read_run_status(run_dir);
    const Json config = read_json_file(run_dir / "config.json");
    const auto iterations = read_iterations(run_dir, status.at("iterations_run").get<std::size_t>());
    const auto log = read_helper_log(run_dir / "helper_log.jsonl");
    const auto trajectories = read_trajectories(run_dir / "trajectories.jsonl");

    Report rep;
    rep.curve_csv = "iteration,best_so_far,candidate_scores,api_calls,tokens\n";
    Json rows = Json::array();
    for (const auto& it : iterations) {
        Json scores = Json::array();
        Json rewards = Json::array();
        std::string joined;
        for (const auto& c : it.candidates) {
            scores.push_back(c.feedback ? Json(c.feedback->score) : Json(nullptr));
            rewards.push_back(c.reward ? Json(*c.reward) : Json(nullptr));
            if (!joined.empty()) joined += ";";
            joined += c.feedback ? shortest_double(c.feedback->score) : "skipped";
        }
        Json filtered = Json::array();
        for (const auto& c : it.candidates) filtered.push_back(c.filtered);
        rows.push_back(Json{{"iteration", it.iteration},
                            {"window", it.window},
                            {"turn", it.turn},
                            {"candidate_scores", scores},
                            {"rewards", rewards},
                            {"filtered", filtered},
                            {"selected", it.selected ? Json(*it.selected) : Json(nullptr)},
                            {"best_so_far", it.best_so_far},
                            {"api_calls", it.cost.calls},
                            {"tokens_in", it.cost.tokens_in},
                            {"tokens_out", it.cost.tokens_out}});
        rep.curve_csv += std::to_string(it.iteration) + "," + shortest_double(it.best_so_far) + "," + csv_field(joined) +
                         "," + std::to_string(it.cost.calls) + "," +
                         std::to_string(it.cost.tokens_in + it.cost.tokens_out) + "\n";
    }

    std::int64_t api_calls = 0, meta_calls = 0, helper_calls = 0, tokens_in = 0, tokens_out = 0;
    for (const auto& r : log) {
        api_calls += record_api_calls(r);
        (r.method == "meta.complete" ? meta_calls : helper_calls) += 1;
        tokens_in += r.tokens_in;
        tokens_out += r.tokens_out;
    }
    std::size_t one = 0, two = 0;
    for (const auto& t : trajectories) (t.steps.size() == 2 ? two : one) += 1;

    Json test = nullptr;
    const fs::path test_path = eval_dir / "test_report.json";
    if (fs::exists(test_path)) {
        const Json t = read_json_file(test_path);
        test = Json{{"aggregate", t.at("aggregate")}, {"n", t.at("n")}, {"metric", config.at("task").at("metric")}};
    }

    RunConfig cfg = config.get<RunConfig>();
    Json best = nullptr;
    if (status.contains("best")) {
        const Json& b = status["best"];
        best = Json{{"score", b.at("score")}, {"iteration", b.at("iteration")}, {"candidate", b.at("candidate")}};
    }
    rep.json = Json{{"schema_version", kReportSchemaVersion},
                    {"run_id", config.value("run_id", "")},
                    {"task", config.at("task").at("id")},
                    {"mode", status.at("mode")},
                    {"config_hash", config_hash(cfg)},
                    {"iterations_run", iterations.size()},
                    {"early_stopped", status.at("early_stopped")},
                    {"seed_score", status.at("seed_score")},
                    {"best", best},
                    {"global_best_curve", status.at("global_best_curve")},
                    {"iterations", rows},
                    {"totals", {{"api_calls", api_calls},
                                {"meta_calls", meta_calls},
                                {"helper_calls", helper_calls},
                                {"tokens_in", tokens_in},
                                {"tokens_out", tokens_out},
                                {"tokens", tokens_in + tokens_out}}},
                    {"trajectories", {{"total", trajectories.size()}, {"one_turn", one}, {"two_turn", two}}},
                    {"test", test}};
    return rep;
}

inline Report write_report(const fs::path& run_dir, const fs::path& eval_dir) {
    Report rep = build_report(run_dir, eval_dir);
    write_text_file(run_dir / "report.json", stable_dump(rep.json));
    write_text_file(run_dir / "curve.csv", rep.curve_csv);
    return rep;
}

}  // namespace w4s
