#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gpdi {

enum class ErrorCode {
  MalformedRecord,
  DegenerateFacet,
  ZeroNormVector,
  GroupTooLargeForExact,
  GpdiUndefined,
  EmptyPositiveSet,
  InsufficientSample,
  DegenerateVariance,
  MetricLinkageMismatch,
  SelectionDegenerate,
  RankDeficient,
  InsufficientRows,
  PerfectCollinearity,
  InvalidArgument,
  EmptyAnalysis,
};

/// Canonical upper-snake spelling used in reports, e.g. "GPDI_UNDEFINED".
std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gpdi
