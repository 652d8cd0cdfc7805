#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "w4s/http_backend.hpp"
#include "w4s/w4s.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;

namespace {

int exit_code_for(w4s::ErrorKind kind) {
    using K = w4s::ErrorKind;
    switch (kind) {
        case K::ConfigError:
        case K::DatasetMissing:
        case K::TooFewSamples:
        case K::IncompleteRun:
        case K::TemplateMissingPlaceholder:
            return 2;
        case K::BackendUnavailable:
        case K::ScenarioExhausted:
        case K::ScenarioMismatch:
            return 3;
        default:
            return 1;
    }
}

w4s::BackendFactory http_factory() {
    return [](const w4s::BackendSpec& spec) -> std::unique_ptr<w4s::ChatBackend> {
        return std::make_unique<w4s::HttpChatBackend>(spec);
    };
}

fs::path resolve_run(const std::string& run, const std::string& runs_dir) {
    if (fs::is_directory(run)) return run;
    const fs::path under = fs::path(runs_dir) / run;
    if (fs::is_directory(under)) return under;
    throw w4s::Error(w4s::ErrorKind::ConfigError, "run not found: " + run);
}

struct Overrides {
    std::optional<int> iterations, m, workers;
    std::optional<std::uint64_t> seed;
    std::optional<double> tau;
    std::string run_id, runs_dir;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--iterations", iterations, "Number of iterations N");
        cmd->add_option("--m", m, "Candidates per iteration in collect mode");
        cmd->add_option("--seed", seed, "Run seed");
        cmd->add_option("--tau", tau, "RWR temperature");
        cmd->add_option("--workers", workers, "Concurrent sample evaluations");
        cmd->add_option("--run-id", run_id, "Run directory name");
        cmd->add_option("--runs-dir", runs_dir, "Parent directory for runs");
    }

    void apply(w4s::CliConfig& cfg) const {
        if (iterations) cfg.run.iterations = *iterations;
        if (m) cfg.run.m = *m;
        if (seed) cfg.run.seed = *seed;
        if (tau) cfg.run.tau = *tau;
        if (workers) cfg.run.workers = *workers;
        if (!run_id.empty()) cfg.run_id = run_id;
        if (!runs_dir.empty()) cfg.runs_dir = runs_dir;
        try {
            cfg.run.validate();
        } catch (const w4s::Error& e) {
            throw w4s::Error(w4s::ErrorKind::ConfigError, e.what());
        }
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Workflow optimization engine: optimize, collect, export, evaluate, replay and report."};
    app.require_subcommand(1);

    std::string config_path, run, runs_dir = "runs", out_path, workflow_path, dataset_path;
    Overrides overrides;

    auto* optimize = app.add_subcommand("optimize", "Run the loop in inference mode (one action per iteration)");
    auto* collect = app.add_subcommand("collect", "Run best-of-m data collection");
    for (auto* cmd : {optimize, collect}) {
        cmd->add_option("--config", config_path, "Run configuration JSON")->required();
        overrides.add_to(cmd);
    }

    auto* exporter = app.add_subcommand("export-rlao", "Write the reward-weighted training dataset of a run");
    auto* eval = app.add_subcommand("eval", "Score a stored workflow on the test split");
    auto* replay = app.add_subcommand("replay", "Re-run a run from its helper log with no live backends");
    auto* report = app.add_subcommand("report", "Regenerate report.json and curve.csv");
    for (auto* cmd : {exporter, eval, replay, report}) {
        cmd->add_option("--run", run, "Run directory or run id")->required();
        cmd->add_option("--runs-dir", runs_dir, "Parent directory for run ids");
    }
    exporter->add_option("--out", out_path, "Output path (default: <run>/rlao_dataset.jsonl)");
    eval->add_option("--workflow", workflow_path, "Workflow source (default: <run>/best_workflow.src)");

    auto* train = app.add_subcommand("train-toy", "Train the toy RWR policy on an exported dataset");
    std::size_t buckets = 8;
    double lr = 0.5;
    int epochs = 200;
    train->add_option("--dataset", dataset_path, "Exported RLAO dataset")->required();
    train->add_option("--buckets", buckets, "Context buckets");
    train->add_option("--lr", lr, "Learning rate");
    train->add_option("--epochs", epochs, "Epochs");
    train->add_option("--out", out_path, "Loss-curve CSV (default: <dataset>.loss.csv)");

    auto* split = app.add_subcommand("split", "Assign validation rows to private/public splits and store them");
    std::string family_name = "qa";
    double ratio = 0.5;
    std::uint64_t seed = 0;
    split->add_option("--input", dataset_path, "Dataset JSONL")->required();
    split->add_option("--out", out_path, "Output JSONL")->required();
    split->add_option("--family", family_name, "Task family (math, qa, code)");
    split->add_option("--ratio", ratio, "Private fraction");
    split->add_option("--seed", seed, "Shuffle seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (optimize->parsed() || collect->parsed()) {
            const w4s::Mode mode = optimize->parsed() ? w4s::Mode::infer : w4s::Mode::collect;
            w4s::CliConfig cfg = w4s::load_cli_config(config_path);
            overrides.apply(cfg);
            const auto result = w4s::optimize(cfg, mode, http_factory());
            const auto& art = result.artifacts;
            std::cout << "run: " << result.run_dir.string() << "\n"
                      << "best score: " << w4s::fixed3(art.best_score()) << "\n"
                      << "iterations: " << art.iterations.size() << "\n"
                      << "trajectories: " << art.trajectories.size() << "\n";
            return 0;
        }
        if (exporter->parsed()) {
            const auto path = w4s::export_rlao(resolve_run(run, runs_dir), out_path);
            std::cout << "wrote " << path.string() << "\n";
            return 0;
        }
        if (eval->parsed()) {
            const auto rep = w4s::evaluate_run(resolve_run(run, runs_dir), workflow_path, http_factory());
            std::cout << "test aggregate: " << w4s::fixed3(rep.aggregate) << " over " << rep.per_sample.size()
                      << " samples\n";
            return 0;
        }
        if (replay->parsed()) {
            const auto result = w4s::replay(resolve_run(run, runs_dir));
            if (!result.identical) {
                std::cerr << "replay diverged: " << (result.replay_dir / "report.json").string()
                          << " differs from the recorded report\n";
                return 1;
            }
            std::cout << "replay matches: " << (result.replay_dir / "report.json").string() << "\n";
            return 0;
        }
        if (report->parsed()) {
            const fs::path dir = resolve_run(run, runs_dir);
            w4s::write_report(dir, dir / "eval");
            std::cout << "wrote " << (dir / "report.json").string() << " and " << (dir / "curve.csv").string() << "\n";
            return 0;
        }
        if (train->parsed()) {
            const auto ds = w4s::load_rwr_dataset(dataset_path);
            if (ds.records.empty()) throw w4s::Error(w4s::ErrorKind::EmptyDataset, "dataset has no records");
            const auto data = w4s::toy_data_from_records(ds.records, buckets);
            const auto result = w4s::train_toy(w4s::ToyPolicy(buckets, data.library.size()), data.batch, lr, epochs);
            const fs::path csv = out_path.empty() ? fs::path(dataset_path + ".loss.csv") : fs::path(out_path);
            w4s::write_text_file(csv, w4s::loss_curve_csv(result.losses));
            std::cout << "templates: " << data.library.size() << ", records: " << data.batch.size() << "\n"
                      << "loss: " << result.losses.front() << " -> " << result.losses.back() << "\n"
                      << "wrote " << csv.string() << "\n";
            return 0;
        }
        if (split->parsed()) {
            const w4s::TaskFamily family = w4s::Json(family_name).get<w4s::TaskFamily>();
            const auto splits = w4s::load_task_splits(dataset_path, family, ratio, seed);
            w4s::Dataset ds;
            for (const auto* part : {&splits.private_val, &splits.public_val, &splits.test})
                ds.samples.insert(ds.samples.end(), part->begin(), part->end());
            w4s::write_dataset(ds, out_path);
            std::cout << "private " << splits.private_val.size() << ", public " << splits.public_val.size() << ", test "
                      << splits.test.size() << "\n";
            return 0;
        }
    } catch (const w4s::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
