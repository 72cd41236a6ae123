#pragma once

#include <stdexcept>
#include <string>

namespace ccpaloc {

enum class ErrorCode {
  MalformedCase,
  NoSlack,
  MultipleSlack,
  NonpositiveReactance,
  DanglingBusReference,
  DisconnectedGrid,
  SingularTopology,
  IslandingOutage,
  InvalidOutage,
  UnbalancedInjections,
  SingularSystem,
  RankDeficient,
  ExhaustedResampling,
  InsufficientTaskData,
  ShapeMismatch,
  SchemaMismatch,
  HashMismatch,
  IoError,
  InvalidConfig,
};

const char* to_string(ErrorCode code);

/// Library-wide exception; `code()` identifies the failure class so callers
/// and the CLI can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace ccpaloc
