#pragma once

#include <stdexcept>
#include <string>

namespace bcf {

// Raised when a caller breaks an operation's preconditions (shape mismatch,
// non-finite input, non-positive std, stepping a finished episode, ...).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid user-supplied configuration (config file, CLI flags, arena file).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An inner controller threw while the control prior was being sampled.
class ControllerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class LoadErrorKind {
    MissingFile,
    MalformedJson,
    ShapeMismatch,
    NonFiniteParameter,
    EmptyEnsemble,
};

inline const char* to_string(LoadErrorKind kind) {
    switch (kind) {
        case LoadErrorKind::MissingFile: return "missing_file";
        case LoadErrorKind::MalformedJson: return "malformed_json";
        case LoadErrorKind::ShapeMismatch: return "shape_mismatch";
        case LoadErrorKind::NonFiniteParameter: return "non_finite_parameter";
        case LoadErrorKind::EmptyEnsemble: return "empty_ensemble";
    }
    return "unknown";
}

class EnsembleLoadError : public std::runtime_error {
public:
    EnsembleLoadError(LoadErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    LoadErrorKind kind() const noexcept { return kind_; }

private:
    LoadErrorKind kind_;
};

// A matrix that must be inverted is singular and no regularisation was given.
class SingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Sampling a collision-free start/goal pair failed repeatedly.
class ArenaConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define BCF_REQUIRE(cond, msg)                                  \
    do {                                                        \
        if (!(cond)) throw ::bcf::ContractViolation(msg);       \
    } while (0)

}  // namespace bcf
