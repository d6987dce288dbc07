#pragma once

#include <stdexcept>
#include <string>

namespace rddclust {

// Error categories map to CLI exit codes.
enum class ErrorCode : int {
  generic = 1,
  config = 2,
  io = 3,
  validation = 4,
  estimation = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace rddclust
