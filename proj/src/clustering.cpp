#include "gpdi/clustering.hpp"

#include "gpdi/error.hpp"
#include "gpdi/parallel.hpp"
#include "gpdi/rng.hpp"
#include "gpdi/similarity.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace gpdi {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Condensed upper triangle, i < j.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * (n - 1) / 2) {}

  double& operator()(std::size_t i, std::size_t j) noexcept {
    if (i > j) std::swap(i, j);
    return d_[offset(i) + (j - i - 1)];
  }
  double* row(std::size_t i) noexcept { return d_.data() + offset(i) - (i + 1); }  // row(i)[j] for j > i

 private:
  std::size_t offset(std::size_t i) const noexcept { return i * n_ - i * (i + 1) / 2; }
  std::size_t n_;
  std::vector<double> d_;
};

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

Metric parse_metric(const std::string& text) {
  if (text == "euclidean") return Metric::Euclidean;
  if (text == "cosine" || text == "cosine-distance" || text == "cosine_distance") return Metric::CosineDistance;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown metric '{}'", text));
}

Linkage parse_linkage(const std::string& text) {
  if (text == "ward") return Linkage::Ward;
  if (text == "average") return Linkage::Average;
  if (text == "complete") return Linkage::Complete;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown linkage '{}'", text));
}

std::string to_string(Metric m) { return m == Metric::Euclidean ? "euclidean" : "cosine"; }

std::string to_string(Linkage l) {
  switch (l) {
    case Linkage::Ward: return "ward";
    case Linkage::Average: return "average";
    case Linkage::Complete: return "complete";
  }
  return "ward";
}

Eigen::MatrixXd group_medians(std::span<const GroupPanel> panels) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(panels.size()), kFacets);
  std::vector<double> column;
  for (std::size_t g = 0; g < panels.size(); ++g) {
    const auto& m = panels[g].members;
    if (m.rows() == 0) throw Error(ErrorCode::InvalidArgument, "median of an empty panel");
    for (int f = 0; f < kFacets; ++f) {
      column.assign(m.col(f).begin(), m.col(f).end());
      std::sort(column.begin(), column.end());
      out(static_cast<Eigen::Index>(g), f) = median_sorted(column);
    }
  }
  return out;
}

LinkageTree hcluster(const Eigen::MatrixXd& points, Metric metric, Linkage linkage,
                     std::vector<std::string> labels) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "clustering needs at least two points");
  if (n > kMaxClusterPoints) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("{} points exceed the clustering cap {}; subsample first", n, kMaxClusterPoints));
  }
  if (linkage == Linkage::Ward && metric != Metric::Euclidean) {
    throw Error(ErrorCode::MetricLinkageMismatch, "ward linkage requires the euclidean metric");
  }
  if (!labels.empty() && labels.size() != n) {
    throw Error(ErrorCode::InvalidArgument, "label count does not match point count");
  }

  DistanceMatrix dist(n);
  Eigen::MatrixXd unit;
  if (metric == Metric::CosineDistance) {
    unit = points;
    for (Eigen::Index r = 0; r < unit.rows(); ++r) {
      const double norm = unit.row(r).norm();
      if (!(norm >= kZeroNorm)) throw Error(ErrorCode::ZeroNormVector, fmt::format("point {} has zero norm", r));
      unit.row(r) /= norm;
    }
  }
  parallel_for(n - 1, [&](std::size_t i, unsigned) {
    double* row = dist.row(i);
    const auto ri = static_cast<Eigen::Index>(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto rj = static_cast<Eigen::Index>(j);
      row[j] = metric == Metric::Euclidean
                   ? (points.row(ri) - points.row(rj)).norm()
                   : 1.0 - std::clamp(unit.row(ri).dot(unit.row(rj)), -1.0, 1.0);
    }
  });

  // Slot s holds the cluster whose smallest leaf is s; nn[s] caches the
  // nearest active slot above s (smallest index on ties).
  std::vector<char> active(n, 1);
  std::vector<std::size_t> size(n, 1), id(n);
  std::iota(id.begin(), id.end(), std::size_t{0});
  std::vector<std::size_t> nn(n, n);
  std::vector<double> nn_dist(n, kInf);

  auto rescan = [&](std::size_t i) {
    nn[i] = n;
    nn_dist[i] = kInf;
    const double* row = dist.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (active[j] && row[j] < nn_dist[i]) {
        nn_dist[i] = row[j];
        nn[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i + 1 < n; ++i) rescan(i);

  LinkageTree tree;
  tree.linkage = linkage;
  tree.metric = metric;
  tree.labels = std::move(labels);
  tree.merges.reserve(n - 1);

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t a = n;
    double best = kInf;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && nn[i] < n && nn_dist[i] < best) {
        best = nn_dist[i];
        a = i;
      }
    }
    const std::size_t b = nn[a];
    const double dab = best;
    const double na = static_cast<double>(size[a]);
    const double nb = static_cast<double>(size[b]);

    tree.merges.push_back({std::min(id[a], id[b]), std::max(id[a], id[b]), dab, size[a] + size[b]});

    active[b] = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a) continue;
      const double dak = dist(a, k);
      const double dbk = dist(b, k);
      double updated = 0;
      switch (linkage) {
        case Linkage::Complete:
          updated = std::max(dak, dbk);
          break;
        case Linkage::Average:
          updated = (na * dak + nb * dbk) / (na + nb);
          break;
        case Linkage::Ward: {
          const double nk = static_cast<double>(size[k]);
          const double sq = ((na + nk) * dak * dak + (nb + nk) * dbk * dbk - nk * dab * dab) / (na + nb + nk);
          updated = std::sqrt(std::max(sq, 0.0));
          break;
        }
      }
      dist(a, k) = updated;
    }
    size[a] += size[b];
    id[a] = n + step;

    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      if (i == a || nn[i] == a || nn[i] == b) {
        rescan(i);
      } else if (i < a) {
        const double d = dist(i, a);
        if (d < nn_dist[i] || (d == nn_dist[i] && a < nn[i])) {
          nn_dist[i] = d;
          nn[i] = a;
        }
      }
    }
  }
  return tree;
}

std::vector<int> cut_labels(const LinkageTree& tree, int k) {
  const std::size_t n = tree.leaves();
  if (k < 1 || static_cast<std::size_t>(k) > n) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("k = {} outside 1..{}", k, n));
  }
  // Union-find over cluster ids; node n+s points at its merged children.
  std::vector<std::size_t> parent(2 * n - 1);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const std::size_t steps = n - static_cast<std::size_t>(k);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto& m = tree.merges[s];
    parent[find_root(parent, m.a)] = n + s;
    parent[find_root(parent, m.b)] = n + s;
  }
  std::vector<int> labels(n);
  std::map<std::size_t, int> relabel;
  for (std::size_t leaf = 0; leaf < n; ++leaf) {
    const std::size_t root = find_root(parent, leaf);
    auto [it, inserted] = relabel.emplace(root, static_cast<int>(relabel.size()));
    labels[leaf] = it->second;
  }
  return labels;
}

std::vector<ClusterAssignment> silhouettes(const Eigen::MatrixXd& points,
                                           std::span<const std::vector<int>> labelings) {
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<ClusterAssignment> out(labelings.size());
  std::vector<std::vector<std::size_t>> cluster_sizes(labelings.size());
  for (std::size_t c = 0; c < labelings.size(); ++c) {
    if (labelings[c].size() != n) throw Error(ErrorCode::InvalidArgument, "labelling length mismatch");
    out[c].labels = labelings[c];
    out[c].k = labelings[c].empty() ? 0 : *std::max_element(labelings[c].begin(), labelings[c].end()) + 1;
    cluster_sizes[c].assign(static_cast<std::size_t>(out[c].k), 0);
    for (int l : labelings[c]) ++cluster_sizes[c][static_cast<std::size_t>(l)];
  }

  // s[c][i], and whether point i had any nonzero a/b for labelling c.
  std::vector<std::vector<double>> score(labelings.size(), std::vector<double>(n, 0.0));
  std::vector<std::vector<char>> spread(labelings.size(), std::vector<char>(n, 0));
  parallel_for(n, [&](std::size_t i, unsigned) {
    std::vector<double> d(n);
    const auto ri = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < n; ++j) d[j] = j == i ? 0.0 : (points.row(ri) - points.row(static_cast<Eigen::Index>(j))).norm();
    std::vector<double> sums;
    for (std::size_t c = 0; c < labelings.size(); ++c) {
      const auto& lab = labelings[c];
      const auto& sizes = cluster_sizes[c];
      sums.assign(sizes.size(), 0.0);
      for (std::size_t j = 0; j < n; ++j) sums[static_cast<std::size_t>(lab[j])] += d[j];
      const auto own = static_cast<std::size_t>(lab[i]);
      if (sizes[own] <= 1 || sizes.size() < 2) continue;  // singleton: s = 0
      const double a = sums[own] / static_cast<double>(sizes[own] - 1);
      double b = kInf;
      for (std::size_t l = 0; l < sizes.size(); ++l) {
        if (l != own && sizes[l] > 0) b = std::min(b, sums[l] / static_cast<double>(sizes[l]));
      }
      const double denom = std::max(a, b);
      if (denom > 0) {
        score[c][i] = (b - a) / denom;
        spread[c][i] = 1;
      }
    }
  });

  for (std::size_t c = 0; c < labelings.size(); ++c) {
    const bool cut_ok = out[c].k >= 2 && static_cast<std::size_t>(out[c].k) < n;
    const bool any_spread = std::any_of(spread[c].begin(), spread[c].end(), [](char v) { return v != 0; });
    out[c].silhouette_defined = cut_ok && any_spread;
    out[c].silhouette_mean =
        out[c].silhouette_defined ? std::accumulate(score[c].begin(), score[c].end(), 0.0) / static_cast<double>(n) : 0.0;
  }
  return out;
}

ClusterAssignment cut_tree(const LinkageTree& tree, int k, const Eigen::MatrixXd& points) {
  if (static_cast<std::size_t>(points.rows()) != tree.leaves()) {
    throw Error(ErrorCode::InvalidArgument, "point count does not match the tree");
  }
  const std::vector<std::vector<int>> one{cut_labels(tree, k)};
  return silhouettes(points, one).front();
}

KSelection select_k(const LinkageTree& tree, std::span<const int> candidates, const Eigen::MatrixXd& points) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no candidate cluster counts");
  const std::set<int> ks(candidates.begin(), candidates.end());
  const auto n = static_cast<int>(tree.leaves());
  std::vector<std::vector<int>> labelings;
  for (int k : ks) {
    if (k < 2 || k > n - 1) throw Error(ErrorCode::InvalidArgument, fmt::format("candidate k = {} outside 2..{}", k, n - 1));
    labelings.push_back(cut_labels(tree, k));
  }
  KSelection sel;
  sel.table = silhouettes(points, labelings);
  double best = -kInf;
  for (const auto& row : sel.table) {
    if (row.silhouette_defined && row.silhouette_mean > best) {
      best = row.silhouette_mean;
      sel.k = row.k;
    }
  }
  if (sel.k == 0) throw Error(ErrorCode::SelectionDegenerate, "no candidate cluster count has a defined silhouette");
  return sel;
}

GroupPanel subsample_panel(const GroupPanel& panel, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("subsample fraction {} outside (0, 1]", fraction));
  }
  const std::size_t total = panel.size();
  const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  GroupPanel out;
  out.group_code = panel.group_code;
  out.space = panel.space;
  out.members.resize(static_cast<Eigen::Index>(want), kFacets);
  // Selection sampling: member t is kept with probability (still needed)/(still left).
  const CounterRng rng(seed, "subsample:" + panel.group_code);
  std::size_t taken = 0;
  for (std::size_t t = 0; t < total && taken < want; ++t) {
    const double needed = static_cast<double>(want - taken);
    const double left = static_cast<double>(total - t);
    if (rng.unit(t) * left < needed) {
      out.members.row(static_cast<Eigen::Index>(taken++)) = panel.members.row(static_cast<Eigen::Index>(t));
    }
  }
  return out;
}

}  // namespace gpdi
