#pragma once

#include "gpdi/error.hpp"
#include "gpdi/types.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gpdi {

inline constexpr double kZeroNorm = 1e-12;

/// Cosine similarity clamped to [-1, 1]. Throws ZERO_NORM_VECTOR when either
/// norm is below 1e-12.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& y) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar nx = x.norm();
  const Scalar ny = y.norm();
  if (!(nx >= Scalar(kZeroNorm)) || !(ny >= Scalar(kZeroNorm))) {
    throw Error(ErrorCode::ZeroNormVector, "cosine of a zero-norm vector");
  }
  return std::clamp<Scalar>(x.dot(y) / (nx * ny), Scalar(-1), Scalar(1));
}

/// Rows scaled to unit length; throws ZERO_NORM_VECTOR on a zero row.
template <typename Scalar>
FacetMatrixT<Scalar> normalize_rows(const FacetMatrixT<Scalar>& m) {
  FacetMatrixT<Scalar> out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const Scalar n = out.row(r).norm();
    if (!(n >= Scalar(kZeroNorm))) {
      throw Error(ErrorCode::ZeroNormVector, "member " + std::to_string(r) + " has zero norm");
    }
    out.row(r) /= n;
  }
  return out;
}

/// Number of unordered pairs among n members.
constexpr std::uint64_t pair_count(std::uint64_t n) noexcept { return n < 2 ? 0 : n * (n - 1) / 2; }

/// Inverse of t = j(j-1)/2 + i over pairs i < j.
std::pair<std::uint64_t, std::uint64_t> unrank_pair(std::uint64_t t) noexcept;

/// Fixed-width histogram of ln-similarities over [-30, 0] plus an underflow bin.
struct LogHistogram {
  static constexpr double kLo = -30.0;
  static constexpr double kWidth = 0.005;
  static constexpr int kBins = 6000;

  std::vector<std::uint64_t> counts = std::vector<std::uint64_t>(kBins, 0);
  std::uint64_t underflow = 0;

  /// -1 for underflow; values at or above 0 land in the last bin.
  static int bin_of(double ln_s) noexcept {
    if (ln_s < kLo) return -1;
    const int b = static_cast<int>((ln_s - kLo) / kWidth);
    return std::min(b, kBins - 1);
  }
  static double bin_lo(int b) noexcept { return kLo + b * kWidth; }

  void add(double ln_s) noexcept {
    const int b = bin_of(ln_s);
    if (b < 0) ++underflow;
    else ++counts[static_cast<std::size_t>(b)];
  }
  void merge(const LogHistogram& other) noexcept;
  std::uint64_t total() const noexcept;
};

enum class DigestMode { Exact, Sampled };

std::string to_string(DigestMode mode);

/// Summary of one group's multiset of ln positive pairwise similarities.
struct SimilarityDigest {
  std::string group_code;
  std::uint64_t n = 0;
  std::uint64_t pair_count_total = 0;
  /// Exact count in exact mode; rounded estimate total*positive_fraction when sampled.
  std::uint64_t pair_count_positive = 0;
  std::uint64_t pairs_drawn = 0;  // sampled draws, 0 in exact mode
  double positive_fraction = 0;
  LogHistogram histogram;
  /// Sorted ascending. Every ln-similarity when `retained_complete`, otherwise
  /// a seeded with-replacement sample of pairs, positive-filtered.
  std::vector<double> retained;
  bool retained_complete = false;
  /// Exact-mode median of the full multiset, from counting-based selection.
  std::optional<double> exact_median;
  DigestMode mode = DigestMode::Exact;
  std::uint64_t seed = 0;
};

struct DigestOptions {
  std::uint64_t exact_cap = 200'000'000;
  std::uint64_t pair_budget = 5'000'000;
  std::uint64_t seed = 42;
  /// Largest number of values a selection pass may materialize before it
  /// refines the value window instead.
  std::size_t selection_memory = std::size_t{1} << 24;
};

inline constexpr std::uint64_t kMinPairBudget = 10'000;

/// Visits every unordered pair once. Throws GROUP_TOO_LARGE_FOR_EXACT above
/// the cap and INVALID_ARGUMENT for fewer than two members.
SimilarityDigest pairwise_digest_exact(const GroupPanel& panel, const DigestOptions& options = {});

/// Uniform with-replacement pair sample keyed on (seed, group code). Falls
/// back to exact mode when the budget covers every pair.
SimilarityDigest pairwise_digest_sampled(const GroupPanel& panel, const DigestOptions& options = {});

/// Exact up to `exact_cap` pairs, sampled beyond.
SimilarityDigest pairwise_digest(const GroupPanel& panel, const DigestOptions& options = {});

struct GpdiResult {
  std::string group_code;
  double d = 0;  // 1 / |median ln s|
  double median_ln = 0;
  DigestMode mode = DigestMode::Exact;
  std::uint64_t sample_size = 0;
  /// 95% half-width for the median (sampled mode; 0 when exact).
  double ci95_halfwidth = 0;
  /// The same interval mapped through 1/|m|.
  double gpdi_ci95_halfwidth = 0;
  std::uint64_t seed = 0;
};

/// Throws EMPTY_POSITIVE_SET when nothing survives the positive filter and
/// GPDI_UNDEFINED when |median| < 1e-12.
GpdiResult gpdi(const SimilarityDigest& digest);

/// Median of sorted values; mean of the middle two for even counts.
double median_sorted(std::span<const double> sorted);

/// Distribution-free 95% bounds for the median of `sorted` (0-based ranks).
std::pair<std::size_t, std::size_t> median_ci_ranks(std::size_t m) noexcept;

}  // namespace gpdi
