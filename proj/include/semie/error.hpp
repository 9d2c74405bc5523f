#pragma once

#include <stdexcept>
#include <string>

namespace semie {

/// Coarse failure class; the CLI maps each one to a distinct exit code.
enum class ErrorKind {
  config = 2,     // invalid arguments or configuration
  input = 3,      // unreadable / malformed input files
  numerical = 4,  // a numerical stage failed (non-finite values, degenerate data)
  internal = 5,   // broken internal invariant
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace semie
