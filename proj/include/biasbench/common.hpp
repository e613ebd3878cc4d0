#ifndef BIASBENCH_COMMON_HPP
#define BIASBENCH_COMMON_HPP

#include <stdexcept>
#include <string>

namespace biasbench {

enum class ErrorKind {
  Io,               // missing/unreadable/unwritable files
  Parse,            // malformed file contents
  InvalidArgument,  // precondition violated by the caller
  State,            // illegal stage transition or handle state
  Numeric,          // non-finite values where finite ones are required
  Alignment,        // prediction sets that cannot be compared
  Locked,           // output directory owned by another run
  Internal,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace biasbench

#endif  // BIASBENCH_COMMON_HPP
