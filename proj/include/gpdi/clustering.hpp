#pragma once

#include "gpdi/types.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gpdi {

enum class Metric { Euclidean, CosineDistance };
enum class Linkage { Ward, Average, Complete };

Metric parse_metric(const std::string& text);
Linkage parse_linkage(const std::string& text);
std::string to_string(Metric m);
std::string to_string(Linkage l);

/// One agglomeration step. Ids follow the usual convention: leaves are
/// 0..n-1 and the cluster formed at step s is n+s. `a < b` always.
struct Merge {
  std::size_t a = 0;
  std::size_t b = 0;
  double height = 0;
  std::size_t size = 0;
};

struct LinkageTree {
  std::vector<Merge> merges;  // n-1 entries, in merge order
  std::vector<std::string> labels;
  Linkage linkage = Linkage::Ward;
  Metric metric = Metric::Euclidean;

  std::size_t leaves() const noexcept { return merges.size() + 1; }
};

struct ClusterAssignment {
  int k = 0;
  std::vector<int> labels;  // per leaf, 0..k-1 by first appearance
  double silhouette_mean = 0;
  bool silhouette_defined = false;  // false for k = 1, k = n, or zero spread
};

/// Per-facet median of each panel (mean of middle two for even sizes); one
/// row per panel, in panel order.
Eigen::MatrixXd group_medians(std::span<const GroupPanel> panels);

inline constexpr std::size_t kMaxClusterPoints = 100'000;

/// Agglomerative clustering with Lance-Williams updates. At equal heights the
/// pair with the lexicographically smallest (min leaf index, min leaf index)
/// merges first. Throws METRIC_LINKAGE_MISMATCH for Ward on a non-euclidean metric.
LinkageTree hcluster(const Eigen::MatrixXd& points, Metric metric = Metric::Euclidean,
                     Linkage linkage = Linkage::Ward, std::vector<std::string> labels = {});

/// Leaf labels after the first n-k merges, without silhouette.
std::vector<int> cut_labels(const LinkageTree& tree, int k);

/// Mean silhouette (euclidean) for each labelling; one O(n^2) pass serves all.
std::vector<ClusterAssignment> silhouettes(const Eigen::MatrixXd& points,
                                           std::span<const std::vector<int>> labelings);

/// Cuts to exactly k clusters and scores the partition on `points`.
ClusterAssignment cut_tree(const LinkageTree& tree, int k, const Eigen::MatrixXd& points);

struct KSelection {
  int k = 0;
  std::vector<ClusterAssignment> table;  // in ascending k
};

/// Argmax mean silhouette over `candidates`, ties toward the smaller k.
/// Throws SELECTION_DEGENERATE when no candidate has a defined silhouette.
KSelection select_k(const LinkageTree& tree, std::span<const int> candidates, const Eigen::MatrixXd& points);

/// Order-preserving seeded sample of round(fraction * N) members.
GroupPanel subsample_panel(const GroupPanel& panel, double fraction, std::uint64_t seed);

}  // namespace gpdi
