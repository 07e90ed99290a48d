#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mdl {

// Bad user input: missing files, malformed data, inconsistent flags.
// The CLI maps this family to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public InputError {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : InputError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

  // Same error, message prefixed with the file it came from.
  DecodeError in_file(const std::string& file) const { return DecodeError(Prefixed{}, file + ": " + what(), offset_); }

 private:
  struct Prefixed {};
  DecodeError(Prefixed, const std::string& message, std::size_t offset) : InputError(message), offset_(offset) {}

  std::size_t offset_;
};

// Shape or length mismatch between values that must agree.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A domain invariant does not hold (degenerate geometry, empty input, ...).
class InvariantError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace mdl
