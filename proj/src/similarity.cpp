#include "gpdi/similarity.hpp"

#include "gpdi/parallel.hpp"
#include "gpdi/rng.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numeric>

namespace gpdi {
namespace {

constexpr Eigen::Index kTile = 256;
constexpr int kRefineBins = 4096;
constexpr std::size_t kDrawChunk = 1 << 16;
constexpr double kZ95 = 1.959963984540054;

using TileBuffer = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rounding in the unit-vector dot product leaves identical directions a few
// ulps short of 1; those count as exactly 1.
inline double ln_similarity(double s) noexcept { return s > 1.0 - 1e-13 ? 0.0 : std::log(s); }

// Calls visit(state[worker], ln s) for every unordered pair with s > 0. Tiles
// have fixed boundaries so every similarity is computed identically whatever
// the thread count.
template <typename State, typename Visit>
void for_each_positive_ln(const FacetMatrix& unit, std::vector<State>& states, Visit&& visit) {
  const Eigen::Index n = unit.rows();
  const std::size_t tiles = static_cast<std::size_t>((n + kTile - 1) / kTile);
  std::vector<std::pair<std::size_t, std::size_t>> work;
  work.reserve(tiles * (tiles + 1) / 2);
  for (std::size_t a = 0; a < tiles; ++a) {
    for (std::size_t b = a; b < tiles; ++b) work.emplace_back(a, b);
  }
  parallel_for(work.size(), [&](std::size_t task, unsigned worker) {
    const auto [a, b] = work[task];
    const Eigen::Index a0 = static_cast<Eigen::Index>(a) * kTile;
    const Eigen::Index b0 = static_cast<Eigen::Index>(b) * kTile;
    const Eigen::Index ra = std::min(kTile, n - a0);
    const Eigen::Index rb = std::min(kTile, n - b0);
    TileBuffer g(ra, rb);
    g.noalias() = unit.middleRows(a0, ra) * unit.middleRows(b0, rb).transpose();
    State& state = states[worker];
    for (Eigen::Index i = 0; i < ra; ++i) {
      const double* row = g.data() + i * rb;
      for (Eigen::Index j = (a == b ? i + 1 : 0); j < rb; ++j) {
        const double s = row[j];
        if (s > 0.0) visit(state, ln_similarity(s));
      }
    }
  });
}

// Seeded with-replacement sample of pairs; ln values of the positive ones in
// draw order.
std::vector<double> draw_ln_sample(const FacetMatrix& unit, const std::string& group,
                                   std::uint64_t seed, std::uint64_t draws) {
  const std::uint64_t total = pair_count(static_cast<std::uint64_t>(unit.rows()));
  const CounterRng rng(seed, group);
  std::vector<double> slots(draws);
  const std::size_t chunks = (draws + kDrawChunk - 1) / kDrawChunk;
  parallel_for(chunks, [&](std::size_t c, unsigned) {
    const std::uint64_t end = std::min<std::uint64_t>(draws, (c + 1) * kDrawChunk);
    for (std::uint64_t t = c * kDrawChunk; t < end; ++t) {
      const auto [i, j] = unrank_pair(rng.below(total, t));
      const double s = unit.row(static_cast<Eigen::Index>(i)).dot(unit.row(static_cast<Eigen::Index>(j)));
      slots[t] = s > 0.0 ? ln_similarity(s) : std::numeric_limits<double>::quiet_NaN();
    }
  });
  std::erase_if(slots, [](double v) { return std::isnan(v); });
  return slots;
}

// One refinement level of the value window used by counting-based selection.
// Level 0 reuses the LogHistogram binning (index -1 is the underflow bin).
struct Level {
  bool log_bins = false;
  double lo = 0;
  double width = 0;
  int bins = 0;
  int first = 0;
  int last = 0;

  int index(double v) const noexcept {
    if (log_bins) return LogHistogram::bin_of(v);
    const double k = std::floor((v - lo) / width);
    if (!(k >= 0)) return 0;
    return k >= bins ? bins - 1 : static_cast<int>(k);
  }
};

bool in_window(const std::vector<Level>& levels, double v) noexcept {
  for (const auto& l : levels) {
    const int k = l.index(v);
    if (k < l.first || k > l.last) return false;
  }
  return true;
}

// Locates the bins holding 0-based ranks r1 <= r2 among `counts` (ordered),
// after skipping `below` values. Returns (first, last, count before first,
// count in [first, last]).
struct BinSpan {
  int first;
  int last;
  std::uint64_t before;
  std::uint64_t inside;
};

BinSpan locate(const std::vector<std::uint64_t>& counts, std::uint64_t r1, std::uint64_t r2) {
  BinSpan span{-1, -1, 0, 0};
  std::uint64_t cum = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const std::uint64_t next = cum + counts[k];
    if (span.first < 0 && r1 < next) {
      span.first = static_cast<int>(k);
      span.before = cum;
    }
    if (r2 < next) {
      span.last = static_cast<int>(k);
      span.inside = next - span.before;
      break;
    }
    cum = next;
  }
  return span;
}

struct CountState {
  std::vector<std::uint64_t> counts;
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
};

// Exact median of every positive ln-similarity without materializing them:
// histogram-narrowed value windows, recounting all pairs on each pass.
double select_median(const FacetMatrix& unit, const LogHistogram& hist, double min_ln,
                     std::size_t memory) {
  const std::uint64_t m = hist.total();
  const std::uint64_t r1 = (m - 1) / 2;
  const std::uint64_t r2 = m / 2;
  const unsigned workers = thread_count();

  // Level 0 from the full histogram; slot 0 is the underflow bin.
  std::vector<std::uint64_t> counts;
  counts.reserve(LogHistogram::kBins + 1);
  counts.push_back(hist.underflow);
  counts.insert(counts.end(), hist.counts.begin(), hist.counts.end());
  BinSpan span = locate(counts, r1, r2);
  std::vector<Level> levels{{true, 0, 0, LogHistogram::kBins, span.first - 1, span.last - 1}};
  std::uint64_t below = span.before;
  std::uint64_t inside = span.inside;
  double lo = levels[0].first < 0 ? min_ln : LogHistogram::bin_lo(levels[0].first);
  double hi = levels[0].last < 0 ? LogHistogram::kLo : LogHistogram::bin_lo(levels[0].last) + LogHistogram::kWidth;

  for (int depth = 0; depth < 64; ++depth) {
    if (inside <= memory) {
      std::vector<std::vector<double>> parts(workers);
      for_each_positive_ln(unit, parts, [&](std::vector<double>& p, double v) {
        if (in_window(levels, v)) p.push_back(v);
      });
      std::vector<double> values;
      values.reserve(inside);
      for (auto& p : parts) values.insert(values.end(), p.begin(), p.end());
      auto k1 = values.begin() + static_cast<std::ptrdiff_t>(r1 - below);
      std::nth_element(values.begin(), k1, values.end());
      const double v1 = *k1;
      if (r1 == r2) return v1;
      const double v2 = *std::min_element(k1 + 1, values.end());
      return 0.5 * (v1 + v2);
    }

    Level next{false, lo, (hi - lo) / kRefineBins, kRefineBins, 0, 0};
    if (!(next.width > 0)) next.width = 1;  // zero-width window: everything lands in bin 0
    std::vector<CountState> states(workers, CountState{std::vector<std::uint64_t>(kRefineBins, 0)});
    for_each_positive_ln(unit, states, [&](CountState& s, double v) {
      if (!in_window(levels, v)) return;
      ++s.counts[static_cast<std::size_t>(next.index(v))];
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
    });
    CountState merged{std::vector<std::uint64_t>(kRefineBins, 0)};
    for (const auto& s : states) {
      for (int k = 0; k < kRefineBins; ++k) merged.counts[k] += s.counts[k];
      merged.min = std::min(merged.min, s.min);
      merged.max = std::max(merged.max, s.max);
    }
    if (merged.min == merged.max) return merged.min;  // both ranks sit on one repeated value

    span = locate(merged.counts, r1 - below, r2 - below);
    next.first = span.first;
    next.last = span.last;
    levels.push_back(next);
    below += span.before;
    inside = span.inside;
    lo = next.lo + next.width * span.first;
    hi = next.lo + next.width * (span.last + 1);
  }
  throw Error(ErrorCode::InvalidArgument, "median selection failed to converge");
}

SimilarityDigest empty_digest(const GroupPanel& panel, DigestMode mode, std::uint64_t seed) {
  if (panel.size() < 2) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("group {} needs at least two members", panel.group_code));
  }
  SimilarityDigest d;
  d.group_code = panel.group_code;
  d.n = panel.size();
  d.pair_count_total = pair_count(d.n);
  d.mode = mode;
  d.seed = seed;
  return d;
}

}  // namespace

std::pair<std::uint64_t, std::uint64_t> unrank_pair(std::uint64_t t) noexcept {
  auto j = static_cast<std::uint64_t>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(t))) / 2.0);
  while (j * (j - 1) / 2 > t) --j;
  while ((j + 1) * j / 2 <= t) ++j;
  return {t - j * (j - 1) / 2, j};
}

void LogHistogram::merge(const LogHistogram& other) noexcept {
  for (int k = 0; k < kBins; ++k) counts[k] += other.counts[k];
  underflow += other.underflow;
}

std::uint64_t LogHistogram::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), underflow);
}

std::string to_string(DigestMode mode) { return mode == DigestMode::Exact ? "exact" : "sampled"; }

SimilarityDigest pairwise_digest_exact(const GroupPanel& panel, const DigestOptions& options) {
  SimilarityDigest d = empty_digest(panel, DigestMode::Exact, options.seed);
  if (d.pair_count_total > options.exact_cap) {
    throw Error(ErrorCode::GroupTooLargeForExact,
                fmt::format("group {} has {} pairs, above the exact cap {}", d.group_code,
                            d.pair_count_total, options.exact_cap));
  }
  const FacetMatrix unit = normalize_rows(panel.members);
  const unsigned workers = thread_count();
  const bool keep_all = d.pair_count_total <= options.pair_budget;

  struct State {
    LogHistogram hist;
    std::vector<double> values;
    double min = 0;
  };
  std::vector<State> states(workers);
  for_each_positive_ln(unit, states, [keep_all](State& s, double v) {
    s.hist.add(v);
    s.min = std::min(s.min, v);
    if (keep_all) s.values.push_back(v);
  });
  double min_ln = 0;
  for (auto& s : states) {
    d.histogram.merge(s.hist);
    min_ln = std::min(min_ln, s.min);
    if (keep_all) d.retained.insert(d.retained.end(), s.values.begin(), s.values.end());
  }
  d.pair_count_positive = d.histogram.total();
  d.positive_fraction = static_cast<double>(d.pair_count_positive) / static_cast<double>(d.pair_count_total);

  if (keep_all) {
    std::sort(d.retained.begin(), d.retained.end());
    d.retained_complete = true;
    if (!d.retained.empty()) d.exact_median = median_sorted(d.retained);
    return d;
  }
  if (d.pair_count_positive > 0) {
    d.exact_median = select_median(unit, d.histogram, min_ln, std::max<std::size_t>(options.selection_memory, 1));
  }
  d.retained = draw_ln_sample(unit, d.group_code, options.seed, options.pair_budget);
  std::sort(d.retained.begin(), d.retained.end());
  return d;
}

SimilarityDigest pairwise_digest_sampled(const GroupPanel& panel, const DigestOptions& options) {
  if (options.pair_budget < kMinPairBudget) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("pair budget {} is below the minimum {}", options.pair_budget, kMinPairBudget));
  }
  if (pair_count(panel.size()) <= options.pair_budget) {
    DigestOptions exact = options;
    exact.exact_cap = std::max(options.exact_cap, options.pair_budget);
    return pairwise_digest_exact(panel, exact);
  }
  SimilarityDigest d = empty_digest(panel, DigestMode::Sampled, options.seed);
  const FacetMatrix unit = normalize_rows(panel.members);
  d.pairs_drawn = options.pair_budget;
  d.retained = draw_ln_sample(unit, d.group_code, options.seed, options.pair_budget);
  std::sort(d.retained.begin(), d.retained.end());
  for (double v : d.retained) d.histogram.add(v);
  d.positive_fraction = static_cast<double>(d.retained.size()) / static_cast<double>(d.pairs_drawn);
  d.pair_count_positive = static_cast<std::uint64_t>(
      std::llround(d.positive_fraction * static_cast<double>(d.pair_count_total)));
  return d;
}

SimilarityDigest pairwise_digest(const GroupPanel& panel, const DigestOptions& options) {
  if (pair_count(panel.size()) <= options.exact_cap) return pairwise_digest_exact(panel, options);
  return pairwise_digest_sampled(panel, options);
}

double median_sorted(std::span<const double> sorted) {
  if (sorted.empty()) throw Error(ErrorCode::InvalidArgument, "median of an empty set");
  const std::size_t m = sorted.size();
  if (m % 2 == 1) return sorted[m / 2];
  return 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
}

std::pair<std::size_t, std::size_t> median_ci_ranks(std::size_t m) noexcept {
  if (m == 0) return {0, 0};
  const double half = 0.5 * static_cast<double>(m);
  const double spread = 0.5 * kZ95 * std::sqrt(static_cast<double>(m));
  // 1-based ranks floor(m/2 - spread) and ceil(1 + m/2 + spread), shifted to 0-based.
  const double lo = std::floor(half - spread) - 1.0;
  const double hi = std::ceil(1.0 + half + spread) - 1.0;
  const auto clamp = [m](double r) {
    return static_cast<std::size_t>(std::clamp(r, 0.0, static_cast<double>(m - 1)));
  };
  return {clamp(lo), clamp(hi)};
}

GpdiResult gpdi(const SimilarityDigest& digest) {
  GpdiResult r;
  r.group_code = digest.group_code;
  r.mode = digest.mode;
  r.seed = digest.seed;
  if (digest.mode == DigestMode::Exact) {
    if (digest.pair_count_positive == 0 || !digest.exact_median) {
      throw Error(ErrorCode::EmptyPositiveSet, fmt::format("group {} has no positive similarities", digest.group_code));
    }
    r.median_ln = *digest.exact_median;
    r.sample_size = digest.pair_count_positive;
  } else {
    if (digest.retained.empty()) {
      throw Error(ErrorCode::EmptyPositiveSet, fmt::format("group {} sample has no positive similarities", digest.group_code));
    }
    r.median_ln = median_sorted(digest.retained);
    r.sample_size = digest.retained.size();
    const auto [lo, hi] = median_ci_ranks(digest.retained.size());
    const double vlo = digest.retained[lo];
    const double vhi = digest.retained[hi];
    r.ci95_halfwidth = 0.5 * (vhi - vlo);
    r.gpdi_ci95_halfwidth = std::abs(vhi) < kZeroNorm ? std::numeric_limits<double>::infinity()
                                                        : 0.5 * (1.0 / std::abs(vhi) - 1.0 / std::abs(vlo));
  }
  if (!(std::abs(r.median_ln) >= 1e-12)) {
    throw Error(ErrorCode::GpdiUndefined,
                fmt::format("group {}: median ln-similarity is zero", digest.group_code));
  }
  r.d = 1.0 / std::abs(r.median_ln);
  return r;
}

}  // namespace gpdi
