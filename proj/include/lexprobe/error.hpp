#pragma once

#include <stdexcept>
#include <string>

namespace lexprobe {

enum class ErrorKind {
  kIo,
  kFormat,
  kCorruption,
  kNotFound,
  kDimensionMismatch,
  kDuplicate,
  kOutOfRange,
  kInvalidArgument,
  kEmptySelection,
  kInsufficientData,
  kNumeric,
  kParse,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so that callers (and the
// grid runner) can decide between aborting and recording the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace lexprobe
