#pragma once

#include "w4s/backend.hpp"
#include "w4s/prompts.hpp"
#include "w4s/sandbox.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace w4s {

using RecordLog = std::function<void(const HelperCallRecord&)>;

struct ProbeOutcome {
    std::optional<AgentAction> action;  // nullopt means the iteration slot is skipped
    int correction_prompts = 0;
    std::vector<std::string> error_reports;
    MessageList conversation;  // the state prompt plus every correction turn
    ExecStats cost;            // meta-agent corrections plus probe executions, wall time excluded
};

// Runs the candidate on the probe sample. On failure the error report goes
// back to the meta-agent, which answers with a corrected program; at most
// kMaxCorrectionAttempts correction prompts are sent. Success means a
// contract-valid answer map, not a correct answer.
inline ProbeOutcome probe_and_correct(const std::string& raw_response, const MessageList& state_prompt, ChatBackend& meta,
                                      double temperature, WorkflowExecutor& executor, const TaskSpec& task,
                                      const Sample& probe, const PromptTemplates& tmpl, const std::string& invocation_prefix,
                                      const RecordLog& log = {}) {
    ProbeOutcome out;
    out.conversation = state_prompt;
    std::string reply = raw_response;
    std::string analysis;
    for (int attempt = 0;; ++attempt) {
        std::string report;
        try {
            AgentAction parsed = parse_action(reply, attempt == 0 ? ProgramOrigin::generated : ProgramOrigin::corrected);
            if (attempt == 0) analysis = parsed.analysis;
            parsed.program.correction_attempts = attempt;
            WorkflowResult run =
                executor.execute(parsed.program, task, probe, invocation_prefix + "-probe" + std::to_string(attempt));
            for (const auto& rec : run.helper_calls) {
                if (log) log(rec);
            }
            ExecStats stats = run.stats();
            stats.wall_ms = 0;
            out.cost += stats;
            if (run.ok()) {
                parsed.analysis = analysis;
                parsed.raw_response = raw_response;
                out.action = std::move(parsed);
                return out;
            }
            report = run.error().report();
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NoCodeBlock && e.kind() != ErrorKind::MissingEntryFunction &&
                e.kind() != ErrorKind::EmptySource)
                throw;
            report = e.what();
        }
        out.error_reports.push_back(report);
        if (attempt == kMaxCorrectionAttempts) return out;
        out.conversation = render_correction_prompt(std::move(out.conversation), reply, report, tmpl);
        Completion fix = meta.complete(out.conversation, temperature, 1);
        ++out.correction_prompts;
        out.cost.calls += 1;
        out.cost.tokens_in += fix.tokens_in;
        out.cost.tokens_out += fix.tokens_out;
        reply = fix.texts.front();
    }
}

}  // namespace w4s
