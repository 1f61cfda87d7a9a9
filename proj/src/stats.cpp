#include "gpdi/stats.hpp"

#include "gpdi/parallel.hpp"
#include "gpdi/rng.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gpdi {
namespace {

std::vector<double> sorted_finite(std::span<const double> v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (double x : v) {
    if (std::isfinite(x)) out.push_back(x);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double kolmogorov_sf(double lambda) {
  if (!(lambda > 0)) return 1.0;
  if (lambda < 0.3) {
    // Theta-function form of the CDF; the alternating series converges too
    // slowly this close to zero.
    const double c = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double sum = 0;
    for (int k = 1; k <= 100; ++k) {
      const double odd = 2.0 * k - 1.0;
      const double term = std::exp(-odd * odd * c);
      sum += term;
      if (term < 1e-300) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0;
  double sign = 1;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a_in, std::span<const double> b_in) {
  const auto a = sorted_finite(a_in);
  const auto b = sorted_finite(b_in);
  if (a.size() < 2 || b.size() < 2) {
    throw Error(ErrorCode::InsufficientSample,
                fmt::format("KS needs two finite values per sample, got {} and {}", a.size(), b.size()));
  }
  const auto na = static_cast<std::int64_t>(a.size());
  const auto nb = static_cast<std::int64_t>(b.size());
  // Integer gap |i*nb - j*na| keeps D symmetric and free of rounding until the end.
  std::int64_t i = 0, j = 0, best = 0;
  while (i < na && j < nb) {
    const double t = std::min(a[i], b[j]);
    while (i < na && a[i] == t) ++i;
    while (j < nb && b[j] == t) ++j;
    best = std::max(best, std::abs(i * nb - j * na));
  }
  KsResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  r.d = static_cast<double>(best) / (static_cast<double>(na) * static_cast<double>(nb));
  const double ne = static_cast<double>(na) * static_cast<double>(nb) / static_cast<double>(na + nb);
  r.p_value = kolmogorov_sf(std::sqrt(ne) * r.d);
  return r;
}

const KsResult& KsMatrix::at(std::size_t i, std::size_t j) const {
  if (i == j || i >= groups.size() || j >= groups.size()) {
    throw Error(ErrorCode::InvalidArgument, "KS matrix has no diagonal cells");
  }
  if (i > j) std::swap(i, j);
  const std::size_t n = groups.size();
  return cells[i * n - i * (i + 1) / 2 + (j - i - 1)];
}

std::vector<double> capped_sample(std::span<const double> values, std::size_t cap, std::uint64_t seed,
                                  const std::string& label) {
  std::vector<double> out(values.begin(), values.end());
  if (out.size() > cap) {
    // Partial Fisher-Yates; swap k draws from the counter stream so the
    // sample depends on (seed, label) only.
    const CounterRng rng(seed, "ks:" + label);
    for (std::size_t k = 0; k < cap; ++k) {
      const std::size_t pick = k + rng.below(out.size() - k, k);
      std::swap(out[k], out[pick]);
    }
    out.resize(cap);
  }
  std::sort(out.begin(), out.end());
  return out;
}

KsMatrix ks_matrix(std::span<const SimilarityDigest> digests, std::size_t per_group_cap, std::uint64_t seed) {
  if (digests.size() < 2) throw Error(ErrorCode::InvalidArgument, "KS matrix needs at least two groups");
  KsMatrix m;
  m.per_group_cap = per_group_cap;
  m.seed = seed;
  std::vector<std::vector<double>> samples(digests.size());
  for (const auto& d : digests) m.groups.push_back(d.group_code);
  parallel_for(digests.size(), [&](std::size_t g, unsigned) {
    samples[g] = capped_sample(digests[g].retained, per_group_cap, seed, digests[g].group_code);
  });

  const std::size_t n = digests.size();
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) cells.emplace_back(i, j);
  }
  m.cells.resize(cells.size());
  parallel_for(cells.size(), [&](std::size_t c, unsigned) {
    const auto [i, j] = cells[c];
    KsResult r;
    try {
      r = ks_two_sample(samples[i], samples[j]);
    } catch (const Error& e) {
      r = KsResult{};
      r.n_a = samples[i].size();
      r.n_b = samples[j].size();
      r.p_value = std::numeric_limits<double>::quiet_NaN();
      r.d = std::numeric_limits<double>::quiet_NaN();
      r.error = e.code();
    }
    r.group_a = m.groups[i];
    r.group_b = m.groups[j];
    m.cells[c] = std::move(r);
  });
  return m;
}

double t_two_sided_p(double t, double dof) {
  if (!std::isfinite(t)) return 0.0;
  const boost::math::students_t dist(dof);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) {
    throw Error(ErrorCode::InvalidArgument, "pearson needs two equal-length series of at least 3 values");
  }
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 1e-24 * n) || !(syy > 1e-24 * n)) {
    throw Error(ErrorCode::DegenerateVariance, "pearson input has zero variance");
  }
  CorrelationResult out;
  out.n = x.size();
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double denom = 1.0 - out.r * out.r;
  out.p_value = denom <= 0 ? 0.0 : t_two_sided_p(out.r * std::sqrt((n - 2) / denom), n - 2);
  return out;
}

}  // namespace gpdi
