#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace gpdi {

inline constexpr int kFacets = 30;
inline constexpr int kItems = 300;
inline constexpr int kItemsPerFacet = kItems / kFacets;

/// Rows are individuals, columns facets. Row-major so each member is contiguous.
template <typename Scalar>
using FacetMatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, kFacets, Eigen::RowMajor>;
template <typename Scalar>
using FacetRowT = Eigen::Matrix<Scalar, 1, kFacets>;

using FacetMatrix = FacetMatrixT<double>;
using FacetRow = FacetRowT<double>;

enum class FacetSpace { Raw, Transformed };

/// One group (country) of facet vectors, in stable input order.
struct GroupPanel {
  std::string group_code;
  FacetMatrix members;
  FacetSpace space = FacetSpace::Raw;

  std::size_t size() const noexcept { return static_cast<std::size_t>(members.rows()); }
};

}  // namespace gpdi
