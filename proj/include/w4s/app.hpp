#pragma once

// Run orchestration shared by the CLI and the acceptance checks: builds
// backends from a CliConfig, runs the loop into a run directory, replays,
// evaluates and exports.

#include "w4s/dataset.hpp"
#include "w4s/rwr_toy.hpp"
#include "w4s/run_dir.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace w4s {

using BackendFactory = std::function<std::unique_ptr<ChatBackend>(const BackendSpec&)>;

enum class BackendRole { meta, executor };

inline std::unique_ptr<ChatBackend> make_backend(const BackendSpec& spec, BackendRole role,
                                                 const BackendFactory& http_factory) {
    if (spec.kind == BackendKind::mock) {
        Scenario scenario = Scenario::load(spec.scenario_path);
        if (role == BackendRole::meta) return std::make_unique<MockMetaBackend>(std::move(scenario));
        return std::make_unique<MockExecutorBackend>(std::move(scenario));
    }
    if (!http_factory) throw Error(ErrorKind::BackendUnavailable, "this build has no HTTP backend");
    return http_factory(spec);
}

inline CliConfig load_cli_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::ConfigError, "config not found: " + path.string());
    Json j;
    try {
        j = read_json_file(path);
    } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, e.what());
    }
    return cli_config_from_json(j, std::filesystem::absolute(path).parent_path());
}

inline std::string default_run_id(const CliConfig& cfg, Mode mode) {
    return cfg.task.id + "-" + (mode == Mode::infer ? "infer" : "collect") + "-s" + std::to_string(cfg.run.seed);
}

inline PromptTemplates templates_for(const CliConfig& cfg) {
    return cfg.templates_dir.empty() ? PromptTemplates{} : load_templates(cfg.templates_dir);
}

inline std::string helper_docs_for(const CliConfig& cfg) {
    return cfg.helper_docs_path.empty() ? std::string(templates::kHelperDocs) : read_text_file(cfg.helper_docs_path);
}

struct LoopResult {
    RunArtifacts artifacts;
    Report report;
    std::filesystem::path run_dir;
};

// Runs optimize/collect into run_dir with the given meta backend and helper
// service, then writes every artifact and the report.
inline LoopResult run_into(const CliConfig& cfg, Mode mode, const std::filesystem::path& run_dir, ChatBackend& meta,
                           HelperService& helpers, const std::filesystem::path& eval_dir) {
    const TaskSplits splits = load_task_splits(cfg.dataset_path, cfg.task.family, cfg.run.split_ratio, cfg.run.seed);
    if (splits.private_val.empty() || splits.public_val.empty())
        throw Error(ErrorKind::DatasetMissing, "dataset lacks private or public validation samples");

    RunLog log;
    RecordingBackend recording(meta, log.sink());
    CodeRunner runner(cfg.python_command, cfg.run.exec_code_timeout_ms);
    SandboxOptions sopts;
    sopts.runtime_command = cfg.runtime_command;
    sopts.workflow_timeout_ms = cfg.run.workflow_timeout_ms;
    sopts.max_helper_calls = cfg.run.max_helper_calls;
    SandboxHost host(sopts, helpers);

    LoopContext ctx;
    ctx.config = cfg.run;
    ctx.task = cfg.task;
    ctx.private_val = splits.private_val;
    ctx.public_val = splits.public_val;
    ctx.meta = &recording;
    ctx.executor = &host;
    ctx.code_runner = &runner;
    ctx.templates = templates_for(cfg);
    ctx.helper_docs = helper_docs_for(cfg);
    ctx.log = log.sink();

    std::optional<WorkflowProgram> seed;
    if (!cfg.seed_workflow_path.empty())
        seed = validate_workflow_program(read_text_file(cfg.seed_workflow_path), ProgramOrigin::seed);

    LoopResult out;
    out.run_dir = run_dir;
    out.artifacts = run_optimization(ctx, mode, seed);
    Json config_json = cli_config_to_json(cfg);
    write_run(run_dir, config_json, out.artifacts, log.records());
    out.report = write_report(run_dir, eval_dir);
    return out;
}

inline std::filesystem::path run_dir_for(const CliConfig& cfg, Mode mode) {
    const std::string id = cfg.run_id.empty() ? default_run_id(cfg, mode) : cfg.run_id;
    return cfg.runs_dir / id;
}

// optimize (infer) and collect. The only entry point that contacts live backends.
inline LoopResult optimize(CliConfig cfg, Mode mode, const BackendFactory& http_factory = {}) {
    cfg.validate_paths();
    if (cfg.run_id.empty()) cfg.run_id = default_run_id(cfg, mode);
    auto meta = make_backend(cfg.run.meta_backend, BackendRole::meta, http_factory);
    auto executor = make_backend(cfg.run.executor_backend, BackendRole::executor, http_factory);
    CodeRunner runner(cfg.python_command, cfg.run.exec_code_timeout_ms);
    LiveHelperService helpers(*executor, runner);
    const auto dir = run_dir_for(cfg, mode);
    return run_into(cfg, mode, dir, *meta, helpers, dir / "eval");
}

inline CliConfig load_run_config(const std::filesystem::path& run_dir) {
    const auto path = run_dir / "config.json";
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::IncompleteRun, "no config.json in " + run_dir.string());
    return cli_config_from_json(read_json_file(path), run_dir);
}

struct ReplayResult {
    bool identical = false;
    std::filesystem::path replay_dir;
    LoopResult loop;
};

// Re-runs a recorded run with every meta-agent completion and helper reply
// served from helper_log.jsonl. No backend is contacted.
inline ReplayResult replay(const std::filesystem::path& run_dir) {
    const Json status = read_run_status(run_dir);
    const CliConfig cfg = load_run_config(run_dir);
    const auto records = read_helper_log(run_dir / "helper_log.jsonl");
    std::vector<HelperCallRecord> meta_records;
    for (const auto& r : records) {
        if (r.invocation_id == "meta") meta_records.push_back(r);
    }
    ReplayMetaBackend meta(std::move(meta_records));
    ReplayHelperService helpers(records);
    ReplayResult out;
    out.replay_dir = run_dir / "replay";
    std::filesystem::remove_all(out.replay_dir);
    out.loop = run_into(cfg, status.at("mode").get<Mode>(), out.replay_dir, meta, helpers, run_dir / "eval");
    const std::string a = read_text_file(run_dir / "report.json");
    const std::string b = read_text_file(out.replay_dir / "report.json");
    out.identical = a == b;
    return out;
}

inline WorkflowProgram stored_workflow(const std::filesystem::path& run_dir, const std::filesystem::path& override_path) {
    const auto path = override_path.empty() ? run_dir / "best_workflow.src" : override_path;
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::ConfigError, "workflow not found: " + path.string());
    return validate_workflow_program(read_text_file(path), ProgramOrigin::seed);
}

// Scores a stored workflow on the test split and refreshes the run's report.
inline EvalReport evaluate_run(const std::filesystem::path& run_dir, const std::filesystem::path& workflow_path,
                               const BackendFactory& http_factory = {}) {
    const CliConfig cfg = load_run_config(run_dir);
    const WorkflowProgram program = stored_workflow(run_dir, workflow_path);
    const TaskSplits splits = load_task_splits(cfg.dataset_path, cfg.task.family, cfg.run.split_ratio, cfg.run.seed);
    if (splits.test.empty()) throw Error(ErrorKind::DatasetMissing, "dataset has no test split");
    auto executor = make_backend(cfg.run.executor_backend, BackendRole::executor, http_factory);
    CodeRunner runner(cfg.python_command, cfg.run.exec_code_timeout_ms);
    LiveHelperService helpers(*executor, runner);
    SandboxOptions sopts;
    sopts.runtime_command = cfg.runtime_command;
    sopts.workflow_timeout_ms = cfg.run.workflow_timeout_ms;
    sopts.max_helper_calls = cfg.run.max_helper_calls;
    SandboxHost host(sopts, helpers);
    RunLog log;
    EvalReport report = evaluate_on_test(program, cfg.task, splits.test, host, &runner, cfg.run.workers, log.sink());
    const auto eval_dir = run_dir / "eval";
    write_text_file(eval_dir / "test_report.json", stable_dump(eval_report_to_json(report)));
    write_text_file(eval_dir / "test_report.csv", eval_report_csv(report));
    write_helper_log(eval_dir / "helper_log.jsonl", log.records());
    if (std::filesystem::exists(run_dir / "run.json")) write_report(run_dir, eval_dir);
    return report;
}

inline std::filesystem::path export_rlao(const std::filesystem::path& run_dir, std::filesystem::path out_path = {}) {
    read_run_status(run_dir);
    const CliConfig cfg = load_run_config(run_dir);
    if (out_path.empty()) out_path = run_dir / "rlao_dataset.jsonl";
    const auto trajectories = read_trajectories(run_dir / "trajectories.jsonl");
    export_dataset(trajectories, cfg.run.tau, config_hash(cfg.run), templates_for(cfg).system, out_path);
    return out_path;
}

}  // namespace w4s
