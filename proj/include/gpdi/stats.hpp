#pragma once

#include "gpdi/error.hpp"
#include "gpdi/similarity.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gpdi {

struct KsResult {
  std::string group_a;
  std::string group_b;
  double d = 0;
  std::uint64_t n_a = 0;
  std::uint64_t n_b = 0;
  double p_value = 1;
  std::optional<ErrorCode> error;  // set for matrix cells that could not be tested
};

/// Survival function of the asymptotic Kolmogorov distribution, P(K > lambda).
double kolmogorov_sf(double lambda);

/// Two-sample KS statistic by a merge over both sorted samples, with the
/// asymptotic p-value at effective size n_a*n_b/(n_a+n_b). Throws
/// INSUFFICIENT_SAMPLE unless both samples hold at least two finite values.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

struct KsMatrix {
  std::vector<std::string> groups;
  std::vector<KsResult> cells;  // upper triangle, row-major over i < j
  std::size_t per_group_cap = 0;
  std::uint64_t seed = 0;

  std::size_t tests() const noexcept { return cells.size(); }
  const KsResult& at(std::size_t i, std::size_t j) const;
};

inline constexpr std::size_t kDefaultKsCap = 100'000;

/// Seeded subsample without replacement, returned sorted. Keeps everything
/// when the input is not larger than `cap`.
std::vector<double> capped_sample(std::span<const double> values, std::size_t cap,
                                  std::uint64_t seed, const std::string& label);

/// All unordered group pairs over capped retained samples. Cells that fail
/// carry their error instead of aborting the matrix.
KsMatrix ks_matrix(std::span<const SimilarityDigest> digests, std::size_t per_group_cap = kDefaultKsCap,
                   std::uint64_t seed = 42);

struct CorrelationResult {
  double r = 0;
  std::size_t n = 0;
  double p_value = 1;
};

/// Product-moment correlation with a two-sided t-test p-value. Throws
/// DEGENERATE_VARIANCE for constant input and INVALID_ARGUMENT for mismatched
/// or short (< 3) input.
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
double t_two_sided_p(double t, double dof);

}  // namespace gpdi
