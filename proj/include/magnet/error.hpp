#pragma once

#include <stdexcept>
#include <string>

namespace magnet {

// Error kinds map to process exit codes; the CLI prints them as a
// machine-readable JSON record on stderr.
enum class ErrorKind : int {
    config = 2,     // bad config key/value, invalid flag combination
    io = 3,         // missing/unreadable/corrupt file
    data = 4,       // malformed dataset content
    numeric = 5,    // non-finite loss or gradient
    internal = 6,   // invariant violation
};

struct Error : std::runtime_error {
    ErrorKind kind;
    Error(ErrorKind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::config: return "config";
        case ErrorKind::io: return "io";
        case ErrorKind::data: return "data";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::internal: return "internal";
    }
    return "unknown";
}

}  // namespace magnet
