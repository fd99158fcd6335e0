#pragma once

#include <stdexcept>
#include <string>

namespace bayesrank {

/// Invalid arguments or data that violate a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

/// The pairwise "better than" relation of a statement is not acyclic.
class CycleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bayesrank
