#include "gpdi/export.hpp"

#include "gpdi/csv.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>

namespace gpdi::io {
namespace {

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

std::string num(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

std::string fixed(double v, int decimals) {
  if (std::isnan(v)) return "NA";
  std::string s = fmt::format("{:.{}f}", v, decimals);
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);  // no "-0.000000"
  return s;
}

Json digest_json(const SimilarityDigest& d) {
  Json j;
  j["country"] = d.group_code;
  j["n"] = d.n;
  j["pairs_total"] = d.pair_count_total;
  j["pairs_positive"] = d.pair_count_positive;
  j["mode"] = to_string(d.mode);
  j["seed"] = d.seed;
  try {
    const GpdiResult g = gpdi(d);
    j["median_ln"] = g.median_ln;
    j["gpdi"] = g.d;
    j["ci95"] = g.ci95_halfwidth;
  } catch (const Error& e) {
    j["median_ln"] = d.exact_median ? Json(*d.exact_median) : Json(nullptr);
    j["gpdi"] = nullptr;
    j["ci95"] = nullptr;
    j["error"] = std::string(to_string(e.code()));
  }
  j["pairs_drawn"] = d.pairs_drawn;
  j["positive_fraction"] = d.positive_fraction;
  j["sample_size"] = d.retained.size();
  j["sample_complete"] = d.retained_complete;
  Json h;
  h["lo"] = LogHistogram::kLo;
  h["width"] = LogHistogram::kWidth;
  h["counts"] = d.histogram.counts;
  h["underflow"] = d.histogram.underflow;
  j["histogram"] = std::move(h);
  return j;
}

SimilarityDigest digest_from_json(const Json& j) {
  SimilarityDigest d;
  d.group_code = j.at("country").get<std::string>();
  d.n = j.at("n").get<std::uint64_t>();
  d.pair_count_total = j.at("pairs_total").get<std::uint64_t>();
  d.pair_count_positive = j.at("pairs_positive").get<std::uint64_t>();
  d.mode = j.at("mode").get<std::string>() == "exact" ? DigestMode::Exact : DigestMode::Sampled;
  d.seed = j.at("seed").get<std::uint64_t>();
  d.pairs_drawn = j.value("pairs_drawn", std::uint64_t{0});
  d.positive_fraction = j.value("positive_fraction", 0.0);
  d.retained_complete = j.value("sample_complete", false);
  if (d.mode == DigestMode::Exact && j.at("median_ln").is_number()) d.exact_median = j.at("median_ln").get<double>();
  const auto& h = j.at("histogram");
  d.histogram.counts = h.at("counts").get<std::vector<std::uint64_t>>();
  d.histogram.underflow = h.value("underflow", std::uint64_t{0});
  if (d.histogram.counts.size() != static_cast<std::size_t>(LogHistogram::kBins)) {
    throw Error(ErrorCode::MalformedRecord, fmt::format("digest {} has a malformed histogram", d.group_code));
  }
  return d;
}

void write_sample(std::ostream& out, std::span<const double> values) {
  static_assert(std::endian::native == std::endian::little, "sample files are little-endian");
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

std::vector<double> read_sample(std::istream& in) {
  std::vector<double> out;
  double v;
  while (in.read(reinterpret_cast<char*>(&v), sizeof v)) out.push_back(v);
  return out;
}

void write_ridgeline_csv(std::ostream& out, std::span<const SimilarityDigest> digests) {
  out << "country,bin_lo,density\n";
  for (const auto& d : digests) {
    const auto mass = static_cast<double>(d.histogram.total());
    if (mass == 0) continue;
    const auto& c = d.histogram.counts;
    int first = 0, last = LogHistogram::kBins - 1;
    while (first < LogHistogram::kBins && c[first] == 0) ++first;
    while (last >= first && c[last] == 0) --last;
    for (int b = first; b <= last; ++b) {
      out << d.group_code << ',' << fixed(LogHistogram::bin_lo(b), 3) << ','
          << num(static_cast<double>(c[b]) / (mass * LogHistogram::kWidth)) << '\n';
    }
  }
}

void write_ks_csv(std::ostream& out, const KsMatrix& m) {
  out << "group_a,group_b,D,p\n";
  for (const auto& c : m.cells) {
    out << c.group_a << ',' << c.group_b << ',' << num(c.d) << ',' << num(c.p_value) << '\n';
  }
}

Json ks_heatmap_json(const KsMatrix& m) {
  const std::size_t n = m.groups.size();
  Json j;
  j["groups"] = m.groups;
  j["per_group_cap"] = m.per_group_cap;
  j["seed"] = m.seed;
  j["tests"] = m.tests();
  j["method"] = "asymptotic";
  Json dmat = Json::array(), pmat = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    Json drow = Json::array(), prow = Json::array();
    for (std::size_t k = 0; k < n; ++k) {
      if (i == k) {
        drow.push_back(nullptr);
        prow.push_back(nullptr);
      } else {
        const auto& c = m.at(i, k);
        drow.push_back(finite_or_null(c.d));
        prow.push_back(finite_or_null(c.p_value));
      }
    }
    dmat.push_back(std::move(drow));
    pmat.push_back(std::move(prow));
  }
  j["D"] = std::move(dmat);
  j["p"] = std::move(pmat);
  Json errors = Json::array();
  for (const auto& c : m.cells) {
    if (c.error) errors.push_back({{"group_a", c.group_a}, {"group_b", c.group_b}, {"error", std::string(to_string(*c.error))}});
  }
  j["errors"] = std::move(errors);
  return j;
}

std::string newick(const LinkageTree& tree) {
  const std::size_t n = tree.leaves();
  const auto label = [&](std::size_t leaf) {
    std::string s = tree.labels.empty() ? std::to_string(leaf) : tree.labels[leaf];
    for (char& c : s) {
      if (std::strchr(" ():;,[]'", c)) c = '_';
    }
    return s;
  };
  const auto height = [&](std::size_t id) { return id < n ? 0.0 : tree.merges[id - n].height; };
  std::function<std::string(std::size_t, double)> node = [&](std::size_t id, double parent_h) -> std::string {
    const std::string len = ":" + num(parent_h - height(id));
    if (id < n) return label(id) + len;
    const auto& m = tree.merges[id - n];
    return "(" + node(m.a, m.height) + "," + node(m.b, m.height) + ")" + len;
  };
  const auto& root = tree.merges.back();
  return "(" + node(root.a, root.height) + "," + node(root.b, root.height) + ");";
}

Json merges_json(const LinkageTree& tree) {
  Json j;
  j["linkage"] = to_string(tree.linkage);
  j["metric"] = to_string(tree.metric);
  j["labels"] = tree.labels;
  Json merges = Json::array();
  for (const auto& m : tree.merges) merges.push_back({m.a, m.b, m.height, m.size});
  j["merges"] = std::move(merges);
  return j;
}

void write_cluster_heatmap_csv(std::ostream& out, const Eigen::MatrixXd& points, const ClusterAssignment& a) {
  out << "member,cluster";
  for (Eigen::Index c = 0; c < points.cols(); ++c) out << fmt::format(",f{:02d}", c + 1);
  out << '\n';
  for (int k = 0; k < a.k; ++k) {
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
      if (a.labels[i] != k) continue;
      out << i << ',' << k;
      for (Eigen::Index c = 0; c < points.cols(); ++c) out << ',' << num(points(static_cast<Eigen::Index>(i), c));
      out << '\n';
    }
  }
}

void write_silhouette_csv(std::ostream& out, const KSelection& sel) {
  out << "k,silhouette,defined,chosen\n";
  for (const auto& row : sel.table) {
    out << row.k << ',' << fixed(row.silhouette_mean, 6) << ',' << (row.silhouette_defined ? 1 : 0) << ','
        << (row.k == sel.k ? 1 : 0) << '\n';
  }
}

void write_ladder_csv(std::ostream& out, const ModelLadder& ladder) {
  out << "model,predictors,n,r2,adj_r2,stars\n";
  for (const auto& row : ladder.rows) {
    std::string preds;
    for (std::size_t i = 0; i < row.predictors.size(); ++i) preds += (i ? ";" : "") + row.predictors[i];
    out << csv::escape(row.label) << ',' << csv::escape(preds) << ',' << row.n << ',';
    if (row.error) {
      out << "NA,NA,\n";
    } else {
      out << fixed(row.r2, 6) << ',' << fixed(row.adj_r2, 6) << ',' << row.stars << '\n';
    }
  }
}

Json regression_json(const RegressionReport& r) {
  Json j;
  j["n"] = r.n;
  j["p"] = r.p;
  j["r2"] = r.r2;
  j["adj_r2"] = r.adj_r2;
  j["residual_variance"] = r.residual_variance;
  j["f_statistic"] = finite_or_null(r.f_statistic);
  j["f_p_value"] = r.f_p_value;
  Json coefs = Json::array();
  for (const auto& c : r.coefficients) {
    coefs.push_back({{"name", c.name},
                     {"estimate", c.estimate},
                     {"std_error", c.std_error},
                     {"t", finite_or_null(c.t)},
                     {"p_value", c.p_value},
                     {"stars", stars(c.p_value)}});
  }
  j["coefficients"] = std::move(coefs);
  Json v = Json::array();
  for (std::size_t i = 0; i < r.vif.size(); ++i) v.push_back({{"name", r.coefficients[i + 1].name}, {"vif", r.vif[i]}});
  j["vif"] = std::move(v);
  if (r.standardization) {
    j["standardization"] = {{"convention", "population"},
                            {"mean", std::vector<double>(r.standardization->mean.begin(), r.standardization->mean.end())},
                            {"sd", std::vector<double>(r.standardization->sd.begin(), r.standardization->sd.end())}};
  }
  j["groups"] = r.groups;
  return j;
}

Json ladder_json(const ModelLadder& ladder) {
  Json j;
  j["response"] = ladder.response;
  j["n_complete"] = ladder.n_complete;
  Json rows = Json::array();
  for (const auto& row : ladder.rows) {
    Json r;
    r["model"] = row.label;
    r["predictors"] = row.predictors;
    r["n"] = row.n;
    if (row.error) {
      r["error"] = *row.error;
    } else {
      r["r2"] = row.r2;
      r["adj_r2"] = row.adj_r2;
      r["f_p_value"] = row.f_p_value;
      r["stars"] = row.stars;
      if (row.nested_in) {
        r["nested_in"] = *row.nested_in;
        r["adj_r2_delta"] = row.adj_r2_delta;
      }
      r["report"] = regression_json(*row.report);
    }
    rows.push_back(std::move(r));
  }
  j["models"] = std::move(rows);
  return j;
}

Json poly_json(const PolyFit& fit) {
  Json j;
  j["degree"] = fit.degree;
  j["n"] = fit.n;
  j["coefficients"] = std::vector<double>(fit.coefficients.begin(), fit.coefficients.end());
  j["r2"] = fit.r2;
  j["adj_r2"] = fit.adj_r2;
  if (fit.vertex_x) {
    j["vertex_x"] = *fit.vertex_x;
    j["vertex_y"] = *fit.vertex_y;
  }
  return j;
}

Json exclusions_json(std::span<const ExcludedGroup> excluded) {
  Json j = Json::array();
  for (const auto& e : excluded) j.push_back({{"country", e.group_code}, {"n", e.n}, {"reason", e.reason}});
  return j;
}

}  // namespace gpdi::io
