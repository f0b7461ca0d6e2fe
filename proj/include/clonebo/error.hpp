#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clonebo {

enum class ErrorKind {
  malformed_input,
  insufficient_data,
  config,
  degenerate_context,
  degenerate_weights,
  state_space_too_large,
  exhausted_search,
  parse,
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::malformed_input: return "malformed_input";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::config: return "config";
    case ErrorKind::degenerate_context: return "degenerate_context";
    case ErrorKind::degenerate_weights: return "degenerate_weights";
    case ErrorKind::state_space_too_large: return "state_space_too_large";
    case ErrorKind::exhausted_search: return "exhausted_search";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries a machine-readable kind so the
// CLI can map it onto an exit code and an error JSON object.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, std::size_t column,
             const std::string& message)
      : Error(ErrorKind::parse, file + ":" + std::to_string(line) + ":" +
                                    std::to_string(column) + ": " + message),
        file_(std::move(file)),
        line_(line),
        column_(column) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string file_;
  std::size_t line_;
  std::size_t column_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace clonebo
