#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memhs {

enum class ErrorCode {
  AngleNearPi,
  NonPositiveEta,
  NotSymmetric,
  UnknownVertex,
  DuplicateVertex,
  InvalidEdge,
  Disconnected,
  NoLoop,
  UncoverableEdge,
  TooFewPairs,
  DegenerateMotion,
  InsufficientData,
  InvalidRecord,
  SingularNormalEquations,
  NonFiniteResidual,
  MissingEstimate,
  InvalidCounts,
  Schema,
  DigestMismatch,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace memhs
