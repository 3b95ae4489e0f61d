#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace otcrf {

enum class ErrorCode {
  NotIrreducible,
  DegenerateSignature,
  RootFindingFailed,
  NormNotIntegral,
  NotAUnit,
  NotTotallyPositive,
  InadmissibleGroup,
  NonPositiveMetric,
  NotStronglyFlat,
  InitialMetricNotPositive,
  FlowDegenerate,
  EmptyWindow,
  NonPositiveSeries,
  NoCertificate,
  ConfigError,
  ParseError,
  SchemaMismatch,
  UnknownSeries,
  MissingInput,
  IoError,
};

std::string_view code_name(ErrorCode code);

/// Every failure in the library is reported through this type. The code is
/// stable and machine readable; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by the flow integrator; carries the flow time at which positivity
/// could not be restored.
class FlowDegenerateError : public Error {
 public:
  FlowDegenerateError(double time, const std::string& message)
      : Error(ErrorCode::FlowDegenerate, message), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace otcrf
