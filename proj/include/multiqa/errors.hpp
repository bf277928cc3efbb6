#pragma once

#include <stdexcept>
#include <string>

namespace multiqa {

/// Bad or missing configuration. The CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A referenced artifact (passage, corpus, index, file) does not exist.
struct NotFoundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input data. Carries the 1-based line number when known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg, long line = -1)
        : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_number(line) {}
    long line_number;
};

/// LLM backend failure (transport, HTTP status, unscripted stub prompt).
struct BackendError : std::runtime_error {
    explicit BackendError(const std::string& msg, int status = 0)
        : std::runtime_error(msg), http_status(status) {}
    int http_status;
};

/// A caller violated an operation's precondition.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace multiqa
