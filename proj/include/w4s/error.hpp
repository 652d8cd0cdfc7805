#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace w4s {

// Every failure the library raises carries one of these kinds so callers
// (and the CLI exit-code mapping) can branch without parsing messages.
enum class ErrorKind {
    // domain-model
    EmptySource,
    MissingEntryFunction,
    MissingAnswerKey,
    NonCoercibleValue,
    InvalidValue,
    // mdp-engine
    WindowFull,
    FailedFeedback,
    SeedlessAllFailed,
    DatasetMissing,
    // meta-agent-gateway
    TemplateMissingPlaceholder,
    NoCodeBlock,
    BackendUnavailable,
    ScenarioExhausted,
    ScenarioMismatch,
    // sandbox-host
    NotACodeTask,
    NoMatchingBlock,
    ProtocolViolation,
    // eval-harness
    TooFewSamples,
    // rlao-collector
    NoViableCandidate,
    NonpositiveTau,
    IoFailure,
    EmptyDataset,
    // rwr-reference
    DivergedLoss,
    // cli / report
    ConfigError,
    IncompleteRun,
    ReplayMismatch,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::EmptySource: return "EmptySource";
        case ErrorKind::MissingEntryFunction: return "MissingEntryFunction";
        case ErrorKind::MissingAnswerKey: return "MissingAnswerKey";
        case ErrorKind::NonCoercibleValue: return "NonCoercibleValue";
        case ErrorKind::InvalidValue: return "InvalidValue";
        case ErrorKind::WindowFull: return "WindowFull";
        case ErrorKind::FailedFeedback: return "FailedFeedback";
        case ErrorKind::SeedlessAllFailed: return "SeedlessAllFailed";
        case ErrorKind::DatasetMissing: return "DatasetMissing";
        case ErrorKind::TemplateMissingPlaceholder: return "TemplateMissingPlaceholder";
        case ErrorKind::NoCodeBlock: return "NoCodeBlock";
        case ErrorKind::BackendUnavailable: return "BackendUnavailable";
        case ErrorKind::ScenarioExhausted: return "ScenarioExhausted";
        case ErrorKind::ScenarioMismatch: return "ScenarioMismatch";
        case ErrorKind::NotACodeTask: return "NotACodeTask";
        case ErrorKind::NoMatchingBlock: return "NoMatchingBlock";
        case ErrorKind::ProtocolViolation: return "ProtocolViolation";
        case ErrorKind::TooFewSamples: return "TooFewSamples";
        case ErrorKind::NoViableCandidate: return "NoViableCandidate";
        case ErrorKind::NonpositiveTau: return "NonpositiveTau";
        case ErrorKind::IoFailure: return "IoFailure";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::DivergedLoss: return "DivergedLoss";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IncompleteRun: return "IncompleteRun";
        case ErrorKind::ReplayMismatch: return "ReplayMismatch";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace w4s
