#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tempora {

// Violated precondition of an operation (unfitted encoder, empty input, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Tensor extents that do not line up for the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when training produces a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tempora
