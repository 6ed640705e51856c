#pragma once

#include <stdexcept>
#include <string>

namespace pairsem {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition.
struct precondition_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

/// Malformed persisted artifact. Carries the 1-based line number when known.
struct format_error : error {
    format_error(const std::string& what, std::size_t line = 0)
        : error(line ? what + " (line " + std::to_string(line) + ")" : what), line(line)
    {}
    std::size_t line;
};

/// Transport or remote failure from an LLM or embedding provider.
struct provider_error : error {
    using error::error;
};

/// A pipeline stage is missing an upstream artifact.
struct dependency_error : error {
    using error::error;
};

}  // namespace pairsem
