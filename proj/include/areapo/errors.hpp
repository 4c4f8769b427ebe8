#pragma once

#include <stdexcept>
#include <string>

namespace areapo {

/// Non-finite or out-of-contract argument.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A mathematical precondition of a routine does not hold (e.g. a reducible chain).
class PreconditionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solve or update produced a non-finite or inconsistent result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration. Carries the source location when known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string source = {}, int line = 0)
      : std::runtime_error(source.empty() ? what
                                          : source + (line > 0 ? ":" + std::to_string(line) : std::string()) +
                                                ": " + what),
        source_(std::move(source)),
        line_(line) {}

  const std::string& source() const noexcept { return source_; }
  int line() const noexcept { return line_; }

 private:
  std::string source_;
  int line_;
};

/// Unreadable, truncated or version-mismatched checkpoint.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace areapo
