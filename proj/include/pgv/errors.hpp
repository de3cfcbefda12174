#pragma once

#include <stdexcept>
#include <string>

namespace pgv {

// Error categories surfaced by the CLI as "error: <kind>: <message>".
enum class ErrorKind {
    Config,      // invalid configuration / unknown key / bad ranges
    Dimension,   // tensor shape mismatch
    Io,          // file system failures, missing artifacts
    Format,      // container magic/version/layout problems
    Data,        // out-of-range labels, corrupt dataset contents
    Numeric,     // numeric degeneracy (zero-norm embeddings, non-finite)
    EmptyBatch,  // no valid query pixels in a contrastive step
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::EmptyBatch: return "empty-batch";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }
    const char* kind_name() const { return error_kind_name(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace pgv
