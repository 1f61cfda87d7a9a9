#include "gpdi/error.hpp"

namespace gpdi {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MALFORMED_RECORD";
    case ErrorCode::DegenerateFacet: return "DEGENERATE_FACET";
    case ErrorCode::ZeroNormVector: return "ZERO_NORM_VECTOR";
    case ErrorCode::GroupTooLargeForExact: return "GROUP_TOO_LARGE_FOR_EXACT";
    case ErrorCode::GpdiUndefined: return "GPDI_UNDEFINED";
    case ErrorCode::EmptyPositiveSet: return "EMPTY_POSITIVE_SET";
    case ErrorCode::InsufficientSample: return "INSUFFICIENT_SAMPLE";
    case ErrorCode::DegenerateVariance: return "DEGENERATE_VARIANCE";
    case ErrorCode::MetricLinkageMismatch: return "METRIC_LINKAGE_MISMATCH";
    case ErrorCode::SelectionDegenerate: return "SELECTION_DEGENERATE";
    case ErrorCode::RankDeficient: return "RANK_DEFICIENT";
    case ErrorCode::InsufficientRows: return "INSUFFICIENT_ROWS";
    case ErrorCode::PerfectCollinearity: return "PERFECT_COLLINEARITY";
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::EmptyAnalysis: return "EMPTY_ANALYSIS";
  }
  return "UNKNOWN";
}

}  // namespace gpdi
