#pragma once

#include <stdexcept>
#include <string>

namespace hecofuse {

// Shape mismatch between tensors (concat, elementwise, fusion inputs).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid static configuration: kernel/channel mismatch, bad pooling target,
// non-divisible ASR scales, unknown scenario token.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File system failure: unreadable or unwritable path.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Mathematically invalid input (non-positive depth, degenerate box).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller violated an API contract (sensor flagged but feature absent,
// backward without a cached forward).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Scene generation could not place objects within the retry budget.
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training diverged; carries the step index in the message.
struct TrainingError : std::runtime_error {
    TrainingError(const std::string& msg, long step)
        : std::runtime_error(msg), step_index(step) {}
    long step_index;
};

// Wire / checkpoint decode failures, one type per corruption class.
struct DecodeError : std::runtime_error {
    explicit DecodeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct BadMagicError : DecodeError {
    explicit BadMagicError(const std::string& msg) : DecodeError(msg) {}
};
struct BadVersionError : DecodeError {
    explicit BadVersionError(const std::string& msg) : DecodeError(msg) {}
};
struct TruncatedError : DecodeError {
    explicit TruncatedError(const std::string& msg) : DecodeError(msg) {}
};

}  // namespace hecofuse
