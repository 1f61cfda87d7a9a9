#pragma once

// Independent reference implementations. Deliberately naive: brute force,
// extended precision, no shared code paths with the engine beyond its types.

#include "gpdi/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace oracle {

using ld = long double;

// ---------------------------------------------------------------- synthetic data

/// Members drawn from a mixture of Gaussian facet profiles around zero.
inline gpdi::GroupPanel mixed_panel(std::size_t n, std::uint64_t seed, const std::string& code = "AA",
                                    int components = 3, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<gpdi::FacetRow> centers(static_cast<std::size_t>(components));
  for (auto& c : centers) {
    for (int f = 0; f < gpdi::kFacets; ++f) c(f) = spread * z(rng);
  }
  std::uniform_int_distribution<int> pick(0, components - 1);
  gpdi::GroupPanel p;
  p.group_code = code;
  p.space = gpdi::FacetSpace::Transformed;
  p.members.resize(static_cast<Eigen::Index>(n), gpdi::kFacets);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centers[static_cast<std::size_t>(pick(rng))];
    for (int f = 0; f < gpdi::kFacets; ++f) p.members(static_cast<Eigen::Index>(i), f) = c(f) + z(rng);
  }
  return p;
}

/// Isotropic unit-variance Gaussian blobs whose centers sit on a square
/// lattice of spacing `separation`: every center pair is at least that far
/// apart and nearest neighbours are exactly that far. Returns points and
/// true labels.
struct Blobs {
  Eigen::MatrixXd points;
  std::vector<int> labels;
};

inline Blobs planted_blobs(int k, int per_cluster, int dim, double separation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  int side = 1;
  while (std::pow(side, dim) < k) ++side;
  Blobs b;
  b.points.resize(k * per_cluster, dim);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd center(dim);
    for (int d = 0, rest = c; d < dim; ++d, rest /= side) center(d) = separation * (rest % side);
    for (int i = 0; i < per_cluster; ++i) {
      const int row = c * per_cluster + i;
      for (int d = 0; d < dim; ++d) b.points(row, d) = center(d) + z(rng);
      b.labels.push_back(c);
    }
  }
  return b;
}

// ---------------------------------------------------------------- similarity

inline ld cosine(const gpdi::FacetRow& x, const gpdi::FacetRow& y) {
  ld dot = 0, nx = 0, ny = 0;
  for (int f = 0; f < gpdi::kFacets; ++f) {
    dot += static_cast<ld>(x(f)) * y(f);
    nx += static_cast<ld>(x(f)) * x(f);
    ny += static_cast<ld>(y(f)) * y(f);
  }
  ld c = dot / (std::sqrt(nx) * std::sqrt(ny));
  return std::clamp<ld>(c, -1, 1);
}

/// Every positive pair's ln-similarity, sorted.
inline std::vector<double> all_ln_similarities(const gpdi::FacetMatrix& m) {
  std::vector<double> out;
  for (Eigen::Index j = 1; j < m.rows(); ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      const ld s = cosine(m.row(i), m.row(j));
      if (s > 0) out.push_back(static_cast<double>(std::log(s)));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Store-all index: 1 / |median of ln positive similarities|.
inline double gpdi(const gpdi::FacetMatrix& m) { return 1.0 / std::abs(median(all_ln_similarities(m))); }

// ---------------------------------------------------------------- KS

/// Sup over every observed threshold of |F_a - F_b|, by counting.
inline double ks_d(const std::vector<double>& a, const std::vector<double>& b) {
  std::set<double> thresholds(a.begin(), a.end());
  thresholds.insert(b.begin(), b.end());
  const auto na = static_cast<std::int64_t>(a.size()), nb = static_cast<std::int64_t>(b.size());
  std::int64_t best = 0;
  for (double t : thresholds) {
    std::int64_t ca = 0, cb = 0;
    for (double v : a) ca += v <= t;
    for (double v : b) cb += v <= t;
    best = std::max(best, std::abs(ca * nb - cb * na));
  }
  return static_cast<double>(best) / (static_cast<double>(na) * static_cast<double>(nb));
}

/// Same supremum with each ECDF evaluated by bisection on a sorted copy;
/// for samples too large for the counting loop.
inline double ks_d_bisect(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<std::int64_t>(a.size()), nb = static_cast<std::int64_t>(b.size());
  std::int64_t best = 0;
  for (const auto* side : {&a, &b}) {
    for (double t : *side) {
      const auto ca = std::upper_bound(a.begin(), a.end(), t) - a.begin();
      const auto cb = std::upper_bound(b.begin(), b.end(), t) - b.begin();
      best = std::max<std::int64_t>(best, std::abs(ca * nb - cb * na));
    }
  }
  return static_cast<double>(best) / (static_cast<double>(na) * static_cast<double>(nb));
}

/// P(K > lambda) from the alternating series, summed in extended precision
/// until the terms vanish.
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0) return 1.0;
  const ld l2 = static_cast<ld>(lambda) * lambda;
  ld sum = 0;
  for (long k = 1; k < 1'000'000; ++k) {
    const ld term = std::exp(-2.0L * k * k * l2);
    sum += (k % 2 ? term : -term);
    if (term < 1e-30L) break;
  }
  return static_cast<double>(std::clamp<ld>(2 * sum, 0, 1));
}

inline double ks_p(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  return kolmogorov_sf(std::sqrt(na * nb / (na + nb)) * ks_d(a, b));
}

// ---------------------------------------------------------------- clustering

struct Merge {
  std::size_t a, b;
  double height;
  std::size_t size;
};

enum class Link { Ward, Average, Complete };

/// O(n^3) agglomeration that recomputes every cluster-to-cluster linkage from
/// the points at each step. Ward uses the centroid form
/// sqrt(2 na nb / (na + nb)) * |ca - cb|. Ties go to the pair with the
/// smallest (min member, min member).
inline std::vector<Merge> naive_linkage(const Eigen::MatrixXd& pts, Link link, bool cosine_metric = false) {
  const auto n = static_cast<std::size_t>(pts.rows());
  const auto dist = [&](std::size_t i, std::size_t j) -> ld {
    const auto x = pts.row(static_cast<Eigen::Index>(i)), y = pts.row(static_cast<Eigen::Index>(j));
    if (!cosine_metric) {
      ld s = 0;
      for (Eigen::Index d = 0; d < pts.cols(); ++d) s += static_cast<ld>(x(d) - y(d)) * (x(d) - y(d));
      return std::sqrt(s);
    }
    ld dot = 0, nx = 0, ny = 0;
    for (Eigen::Index d = 0; d < pts.cols(); ++d) {
      dot += static_cast<ld>(x(d)) * y(d);
      nx += static_cast<ld>(x(d)) * x(d);
      ny += static_cast<ld>(y(d)) * y(d);
    }
    return 1 - std::clamp<ld>(dot / std::sqrt(nx * ny), -1, 1);
  };
  struct Cluster {
    std::vector<std::size_t> members;
    std::size_t id;
  };
  std::vector<Cluster> live;
  for (std::size_t i = 0; i < n; ++i) live.push_back({{i}, i});
  const auto linkage = [&](const Cluster& p, const Cluster& q) -> ld {
    if (link == Link::Ward) {
      ld sq = 0;
      for (Eigen::Index d = 0; d < pts.cols(); ++d) {
        ld cp = 0, cq = 0;
        for (auto i : p.members) cp += pts(static_cast<Eigen::Index>(i), d);
        for (auto j : q.members) cq += pts(static_cast<Eigen::Index>(j), d);
        cp /= p.members.size();
        cq /= q.members.size();
        sq += (cp - cq) * (cp - cq);
      }
      const ld na = p.members.size(), nb = q.members.size();
      return std::sqrt(2 * na * nb / (na + nb)) * std::sqrt(sq);
    }
    ld acc = link == Link::Average ? 0 : -1;
    for (auto i : p.members) {
      for (auto j : q.members) {
        const ld d = dist(i, j);
        acc = link == Link::Average ? acc + d : std::max(acc, d);
      }
    }
    return link == Link::Average ? acc / (p.members.size() * q.members.size()) : acc;
  };
  const auto key = [](const Cluster& c) { return *std::min_element(c.members.begin(), c.members.end()); };
  std::vector<Merge> out;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    ld best = std::numeric_limits<ld>::infinity();
    std::size_t bp = 0, bq = 0;
    std::pair<std::size_t, std::size_t> best_key{n, n};
    for (std::size_t p = 0; p < live.size(); ++p) {
      for (std::size_t q = p + 1; q < live.size(); ++q) {
        const ld d = linkage(live[p], live[q]);
        const std::pair<std::size_t, std::size_t> k = std::minmax(key(live[p]), key(live[q]));
        if (d < best || (d == best && k < best_key)) {
          best = d;
          bp = p;
          bq = q;
          best_key = k;
        }
      }
    }
    Cluster merged;
    merged.members = live[bp].members;
    merged.members.insert(merged.members.end(), live[bq].members.begin(), live[bq].members.end());
    merged.id = n + step;
    out.push_back({std::min(live[bp].id, live[bq].id), std::max(live[bp].id, live[bq].id), static_cast<double>(best),
                   merged.members.size()});
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(bq));
    live[bp] = std::move(merged);
  }
  return out;
}

/// Mean silhouette by definition; singleton clusters contribute 0.
inline double silhouette(const Eigen::MatrixXd& pts, const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  ld total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<ld> sum(static_cast<std::size_t>(k), 0);
    std::vector<std::size_t> cnt(static_cast<std::size_t>(k), 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sum[static_cast<std::size_t>(labels[j])] +=
          (pts.row(static_cast<Eigen::Index>(i)) - pts.row(static_cast<Eigen::Index>(j))).norm();
      ++cnt[static_cast<std::size_t>(labels[j])];
    }
    const auto own = static_cast<std::size_t>(labels[i]);
    if (cnt[own] == 0) continue;
    const ld a = sum[own] / cnt[own];
    ld b = std::numeric_limits<ld>::infinity();
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (c != own && cnt[c] > 0) b = std::min(b, sum[c] / cnt[c]);
    }
    const ld m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0;
  }
  return static_cast<double>(total / n);
}

// ---------------------------------------------------------------- regression

using MatL = Eigen::Matrix<ld, Eigen::Dynamic, Eigen::Dynamic>;
using VecL = Eigen::Matrix<ld, Eigen::Dynamic, 1>;

/// Gauss-Jordan with partial pivoting; returns A^-1.
inline MatL inverse(MatL a) {
  const Eigen::Index n = a.rows();
  MatL inv = MatL::Identity(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < n; ++r) {
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    }
    a.row(c).swap(a.row(piv));
    inv.row(c).swap(inv.row(piv));
    const ld d = a(c, c);
    a.row(c) /= d;
    inv.row(c) /= d;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == c) continue;
      const ld f = a(r, c);
      a.row(r) -= f * a.row(c);
      inv.row(r) -= f * inv.row(c);
    }
  }
  return inv;
}

struct Ols {
  std::vector<double> beta;  // intercept first
  std::vector<double> se;
  double r2 = 0, adj_r2 = 0;
  std::vector<double> fitted;
};

/// Normal equations (X'X) b = X'y in extended precision.
inline Ols ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index n = x.rows(), p = x.cols();
  MatL d(n, p + 1);
  d.col(0).setOnes();
  d.rightCols(p) = x.cast<ld>();
  const VecL yl = y.cast<ld>();
  const MatL xtx_inv = inverse(d.transpose() * d);
  const VecL b = xtx_inv * (d.transpose() * yl);
  const VecL fit = d * b;
  const ld ybar = yl.mean();
  const ld sse = (yl - fit).squaredNorm();
  const ld sst = (yl.array() - ybar).square().sum();
  Ols o;
  o.r2 = static_cast<double>(1 - sse / sst);
  o.adj_r2 = static_cast<double>(1 - (sse / (n - p - 1)) / (sst / (n - 1)));
  const ld s2 = sse / (n - p - 1);
  for (Eigen::Index i = 0; i <= p; ++i) {
    o.beta.push_back(static_cast<double>(b(i)));
    o.se.push_back(static_cast<double>(std::sqrt(s2 * xtx_inv(i, i))));
  }
  for (Eigen::Index r = 0; r < n; ++r) o.fitted.push_back(static_cast<double>(fit(r)));
  return o;
}

inline std::vector<double> vif(const Eigen::MatrixXd& x) {
  std::vector<double> out;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::MatrixXd others(x.rows(), x.cols() - 1);
    for (Eigen::Index c = 0, o = 0; c < x.cols(); ++c) {
      if (c != j) others.col(o++) = x.col(c);
    }
    out.push_back(1.0 / (1.0 - ols(others, x.col(j)).r2));
  }
  return out;
}

/// Two-pass mean and population sd.
inline std::pair<double, double> mean_sd(std::span<const double> v) {
  ld m = 0;
  for (double x : v) m += x;
  m /= v.size();
  ld ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return {static_cast<double>(m), static_cast<double>(std::sqrt(ss / v.size()))};
}

inline double pearson_r(std::span<const double> x, std::span<const double> y) {
  const auto [mx, sx] = mean_sd(x);
  const auto [my, sy] = mean_sd(y);
  ld s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - static_cast<ld>(mx)) * (y[i] - static_cast<ld>(my));
  return static_cast<double>(s / x.size() / (static_cast<ld>(sx) * sy));
}

}  // namespace oracle
