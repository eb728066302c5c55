#pragma once

#include <stdexcept>
#include <string>

namespace dcdsm {

/// Bad argument value or violated precondition that is not about shapes.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor extents do not satisfy an operation's shape precondition.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical post-condition failed (e.g. an inverse FFT with a large
/// imaginary residue).
class NumericalContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The caller broke a usage contract that cannot be checked statically,
/// such as handing gradcheck a non-deterministic closure.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed file contents. `offset` is the byte position where parsing
/// stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Checkpoint or config fingerprints disagree.
class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dcdsm
