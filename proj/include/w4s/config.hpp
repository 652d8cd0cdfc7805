#pragma once

#include "w4s/domain.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace w4s {

enum class BackendKind { http_chat, mock };

NLOHMANN_JSON_SERIALIZE_ENUM(BackendKind, {{BackendKind::http_chat, "http_chat"}, {BackendKind::mock, "mock"}})

struct BackendSpec {
    BackendKind kind = BackendKind::mock;
    std::string endpoint;                    // base URL, e.g. https://api.openai.com
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env;                 // name of the environment variable holding the key
    std::string scenario_path;               // mock only
    int timeout_ms = 60000;
    int retries = 3;

    void validate(std::string_view which) const {
        const std::string w(which);
        if (kind == BackendKind::mock && scenario_path.empty())
            throw Error(ErrorKind::ConfigError, w + ": mock backend requires scenario_path");
        if (kind == BackendKind::http_chat && (endpoint.empty() || model.empty()))
            throw Error(ErrorKind::ConfigError, w + ": http_chat backend requires endpoint and model");
        if (timeout_ms <= 0 || retries < 0) throw Error(ErrorKind::ConfigError, w + ": bad timeout/retries");
    }

    friend bool operator==(const BackendSpec&, const BackendSpec&) = default;
};

inline void to_json(Json& j, const BackendSpec& b) {
    j = Json{{"kind", b.kind},           {"endpoint", b.endpoint},       {"path", b.path},
             {"model", b.model},         {"api_key_env", b.api_key_env}, {"scenario_path", b.scenario_path},
             {"timeout_ms", b.timeout_ms}, {"retries", b.retries}};
}

inline void from_json(const Json& j, BackendSpec& b) {
    const BackendSpec d;
    b.kind = j.value("kind", d.kind);
    b.endpoint = j.value("endpoint", d.endpoint);
    b.path = j.value("path", d.path);
    b.model = j.value("model", d.model);
    b.api_key_env = j.value("api_key_env", d.api_key_env);
    b.scenario_path = j.value("scenario_path", d.scenario_path);
    b.timeout_ms = j.value("timeout_ms", d.timeout_ms);
    b.retries = j.value("retries", d.retries);
}

// Every hyperparameter of a run. Defaults are the published settings:
// 10 iterations, m = 5, tau = 0.4, horizon 2, inference temperature 0.5.
struct RunConfig {
    int m = 5;
    double tau = 0.4;
    int horizon = 2;
    int iterations = 10;
    double meta_temperature_infer = 0.5;
    double meta_temperature_collect = 0.8;
    double filter_threshold = 0.05;
    int case_study_k = 3;
    int workflow_timeout_ms = 120000;
    int exec_code_timeout_ms = 10000;
    int max_helper_calls = 64;
    std::uint64_t seed = 0;
    int workers = 4;
    double split_ratio = 0.5;
    // Stops once this many consecutive iterations fail to raise the global best; 0 disables.
    int early_stop_patience = 0;
    BackendSpec meta_backend;
    BackendSpec executor_backend;

    void validate() const {
        auto bad = [](const std::string& what) { throw Error(ErrorKind::ConfigError, what); };
        if (m < 1) bad("m must be >= 1");
        if (!(tau > 0.0)) bad("tau must be > 0");
        if (horizon != 2) bad("horizon is fixed at 2 in this release");
        if (iterations < 1) bad("iterations must be >= 1");
        if (!(meta_temperature_infer >= 0.0) || !(meta_temperature_collect >= 0.0)) bad("temperatures must be >= 0");
        if (!(filter_threshold >= 0.0 && filter_threshold <= 1.0)) bad("filter_threshold must be in [0,1]");
        if (case_study_k < 0) bad("case_study_k must be >= 0");
        if (workflow_timeout_ms <= 0 || exec_code_timeout_ms <= 0) bad("timeouts must be positive");
        if (max_helper_calls < 1) bad("max_helper_calls must be >= 1");
        if (workers < 1) bad("workers must be >= 1");
        if (!(split_ratio > 0.0 && split_ratio < 1.0)) bad("split_ratio must be in (0,1)");
        if (early_stop_patience < 0) bad("early_stop_patience must be >= 0");
        meta_backend.validate("meta_backend");
        executor_backend.validate("executor_backend");
    }
};

inline void to_json(Json& j, const RunConfig& c) {
    j = Json{{"m", c.m},
             {"tau", c.tau},
             {"horizon", c.horizon},
             {"iterations", c.iterations},
             {"meta_temperature_infer", c.meta_temperature_infer},
             {"meta_temperature_collect", c.meta_temperature_collect},
             {"filter_threshold", c.filter_threshold},
             {"case_study_k", c.case_study_k},
             {"workflow_timeout_ms", c.workflow_timeout_ms},
             {"exec_code_timeout_ms", c.exec_code_timeout_ms},
             {"max_helper_calls", c.max_helper_calls},
             {"seed", c.seed},
             {"workers", c.workers},
             {"split_ratio", c.split_ratio},
             {"early_stop_patience", c.early_stop_patience},
             {"meta_backend", c.meta_backend},
             {"executor_backend", c.executor_backend}};
}

inline void from_json(const Json& j, RunConfig& c) {
    const RunConfig d;
    c.m = j.value("m", d.m);
    c.tau = j.value("tau", d.tau);
    c.horizon = j.value("horizon", d.horizon);
    c.iterations = j.value("iterations", d.iterations);
    c.meta_temperature_infer = j.value("meta_temperature_infer", d.meta_temperature_infer);
    c.meta_temperature_collect = j.value("meta_temperature_collect", d.meta_temperature_collect);
    c.filter_threshold = j.value("filter_threshold", d.filter_threshold);
    c.case_study_k = j.value("case_study_k", d.case_study_k);
    c.workflow_timeout_ms = j.value("workflow_timeout_ms", d.workflow_timeout_ms);
    c.exec_code_timeout_ms = j.value("exec_code_timeout_ms", d.exec_code_timeout_ms);
    c.max_helper_calls = j.value("max_helper_calls", d.max_helper_calls);
    c.seed = j.value("seed", d.seed);
    c.workers = j.value("workers", d.workers);
    c.split_ratio = j.value("split_ratio", d.split_ratio);
    c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
    c.meta_backend = j.value("meta_backend", d.meta_backend);
    c.executor_backend = j.value("executor_backend", d.executor_backend);
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(Json(c).dump())); }

// Everything the CLI needs: the run hyperparameters plus paths. Relative
// paths resolve against the directory holding the config file.
struct CliConfig {
    RunConfig run;
    TaskSpec task;
    std::filesystem::path dataset_path;
    std::filesystem::path templates_dir;  // empty = built-in templates
    std::filesystem::path runs_dir = "runs";
    std::string run_id;                   // empty = derived from task, mode and seed
    std::vector<std::string> runtime_command;
    std::string python_command = "python3";
    std::filesystem::path seed_workflow_path;  // optional W0
    std::filesystem::path helper_docs_path;    // optional override of the helper API docs

    void validate_paths() const {
        if (dataset_path.empty() || !std::filesystem::exists(dataset_path))
            throw Error(ErrorKind::ConfigError, "dataset not found: " + dataset_path.string());
        if (!templates_dir.empty() && !std::filesystem::is_directory(templates_dir))
            throw Error(ErrorKind::ConfigError, "templates_dir not found: " + templates_dir.string());
        if (!seed_workflow_path.empty() && !std::filesystem::exists(seed_workflow_path))
            throw Error(ErrorKind::ConfigError, "seed workflow not found: " + seed_workflow_path.string());
        if (!helper_docs_path.empty() && !std::filesystem::exists(helper_docs_path))
            throw Error(ErrorKind::ConfigError, "helper docs not found: " + helper_docs_path.string());
        for (const auto* b : {&run.meta_backend, &run.executor_backend}) {
            if (b->kind == BackendKind::mock && !std::filesystem::exists(b->scenario_path))
                throw Error(ErrorKind::ConfigError, "scenario not found: " + b->scenario_path);
        }
        if (runtime_command.empty()) throw Error(ErrorKind::ConfigError, "runtime_command is empty");
    }
};

inline CliConfig cli_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
        if (p.empty()) return {};
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    CliConfig c;
    try {
        c.run = j.get<RunConfig>();
        c.task = j.at("task").get<TaskSpec>();
        c.dataset_path = resolve(j.value("dataset_path", c.task.dataset_ref));
        c.templates_dir = resolve(j.value("templates_dir", ""));
        c.runs_dir = resolve(j.value("runs_dir", std::string("runs")));
        c.run_id = j.value("run_id", "");
        c.runtime_command = j.value("runtime_command", std::vector<std::string>{});
        c.python_command = j.value("python_command", std::string("python3"));
        c.seed_workflow_path = resolve(j.value("seed_workflow_path", ""));
        c.helper_docs_path = resolve(j.value("helper_docs_path", ""));
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::ConfigError, e.what());
    }
    for (auto& arg : c.runtime_command) {
        if (arg.rfind("./", 0) == 0 || arg.rfind("../", 0) == 0) arg = (base_dir / arg).lexically_normal().string();
    }
    for (auto* b : {&c.run.meta_backend, &c.run.executor_backend}) {
        if (!b->scenario_path.empty()) b->scenario_path = resolve(b->scenario_path).string();
    }
    try {
        c.task.validate();
        c.run.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, e.what());
    }
    return c;
}

inline Json cli_config_to_json(const CliConfig& c) {
    Json j = c.run;
    j["task"] = c.task;
    j["dataset_path"] = c.dataset_path.string();
    j["templates_dir"] = c.templates_dir.string();
    j["runs_dir"] = c.runs_dir.string();
    j["run_id"] = c.run_id;
    j["runtime_command"] = c.runtime_command;
    j["python_command"] = c.python_command;
    j["seed_workflow_path"] = c.seed_workflow_path.string();
    j["helper_docs_path"] = c.helper_docs_path.string();
    return j;
}

}  // namespace w4s
