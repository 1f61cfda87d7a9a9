#include "commands.hpp"

#include "gpdi/clustering.hpp"
#include "gpdi/csv.hpp"
#include "gpdi/export.hpp"
#include "gpdi/ingest.hpp"
#include "gpdi/parallel.hpp"
#include "gpdi/regression.hpp"
#include "gpdi/similarity.hpp"
#include "gpdi/stats.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace gpdi::cli {
namespace fs = std::filesystem;
using Json = nlohmann::json;          // sorted keys: manifest and echoes
using OJson = nlohmann::ordered_json;  // field order fixed by the writer

namespace {

constexpr const char* kManifest = "manifest.json";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ifstream open_input(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(fmt::format("no {} path given", what));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open {} '{}'", what, path));
  return in;
}

std::ifstream open_stage_file(const fs::path& root, const std::string& rel) {
  const fs::path p = root / rel;
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MissingStageError(fmt::format("missing stage output '{}'", p.string()));
  return in;
}

// Files one stage writes; removed again if the stage fails.
class StageOutput {
 public:
  StageOutput(fs::path root, std::string stage) : root_(std::move(root)), stage_(std::move(stage)) {}

  void write(const std::string& rel, const std::string& bytes) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError(fmt::format("cannot write '{}'", p.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError(fmt::format("short write to '{}'", p.string()));
    files_.push_back(rel);
  }

  Json& info() { return info_; }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& rel : files_) fs::remove(root_ / rel, ec);
    files_.clear();
  }

  void commit(const RunConfig& cfg, std::optional<double> millis) {
    Json manifest = Json::object();
    if (fs::exists(root_ / kManifest)) {
      try {
        manifest = Json::parse(read_file(root_ / kManifest));
      } catch (const Json::exception&) {
        manifest = Json::object();
      }
    }
    manifest["engine"] = {{"name", "gpdi"}, {"version", kEngineVersion}};
    manifest["seed"] = cfg.seed;
    Json stage;
    stage["config"] = Json::parse(cfg.echo_json());
    stage["info"] = info_;
    std::vector<std::string> sorted = files_;
    std::sort(sorted.begin(), sorted.end());
    stage["files"] = sorted;
    if (millis) stage["timing_ms"] = *millis;
    manifest["stages"][stage_] = std::move(stage);

    Json hashes = Json::object();
    for (const auto& [name, st] : manifest["stages"].items()) {
      for (const auto& rel : st["files"]) {
        const fs::path p = root_ / rel.get<std::string>();
        if (fs::exists(p)) hashes[rel.get<std::string>()] = sha256_file(p);
      }
    }
    manifest["files"] = std::move(hashes);
    std::ofstream out(root_ / kManifest, std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
  }

 private:
  fs::path root_;
  std::string stage_;
  std::vector<std::string> files_;
  Json info_ = Json::object();
};

template <typename Body>
int run_stage(const RunConfig& cfg, const std::string& name, Body&& body) {
  StageOutput out(cfg.out, name);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fs::create_directories(cfg.out);
    body(out);
    std::optional<double> millis;
    if (cfg.timings) {
      millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    out.commit(cfg, millis);
    return kOk;
  } catch (const ConfigError& e) {
    out.rollback();
    std::cerr << "gpdi " << name << ": config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const MissingStageError& e) {
    out.rollback();
    std::cerr << "gpdi " << name << ": " << e.what() << '\n';
    return kMissingStage;
  } catch (const Error& e) {
    out.rollback();
    std::cerr << "gpdi " << name << ": " << e.what() << '\n';
    return e.code() == ErrorCode::InvalidArgument ? kConfigError : kDataError;
  } catch (const std::exception& e) {
    out.rollback();
    std::cerr << "gpdi " << name << ": data error: " << e.what() << '\n';
    return kDataError;
  }
}

struct Loaded {
  ReadResult read;
  PanelSet set;
  std::string source;
};

Loaded load_panels(const RunConfig& cfg) {
  const ItemCoding coding = parse_coding(cfg.coding);
  Loaded l;
  if (!cfg.input.empty()) {
    Keying keying = Keying::cyclic();
    if (!cfg.keying.empty()) {
      auto k = open_input(cfg.keying, "keying file");
      keying = Keying::read_csv(k);
    }
    auto in = open_input(cfg.input, "response file");
    l.read = read_raw_csv(in, keying, coding);
    l.source = "raw";
  } else if (!cfg.scored.empty()) {
    auto in = open_input(cfg.scored, "scored file");
    l.read = read_scored_csv(in, coding);
    l.source = "scored";
  } else {
    throw ConfigError("one of --input or --scored is required");
  }
  l.set = build_panels(l.read.rows, cfg.min_group_size);
  return l;
}

Json rejects_json(const std::vector<RejectedRecord>& rejected) {
  Json j = Json::array();
  for (const auto& r : rejected) j.push_back({{"line", r.line}, {"reason", r.reason}});
  return j;
}

std::string dump(const OJson& j) { return j.dump(2) + "\n"; }

// The stage's own row of gpdi.csv, as parsed back by later stages.
struct GpdiRow {
  std::string country;
  std::uint64_t n = 0;
  std::string mode;
  double gpdi = NAN;
  double median_ln = NAN;
  double ci95 = NAN;
  std::string status;
};

double cell_number(const std::string& s) {
  if (s.empty() || s == "NA") return NAN;
  return std::stod(s);
}

std::vector<GpdiRow> read_gpdi_csv(const fs::path& root) {
  auto in = open_stage_file(root, "gpdi.csv");
  csv::Reader reader(in);
  std::vector<std::string> f;
  reader.next(f);
  std::vector<GpdiRow> rows;
  while (reader.next(f)) {
    if (f.size() < 12) throw Error(ErrorCode::MalformedRecord, fmt::format("gpdi.csv line {} is short", reader.line()));
    GpdiRow r;
    r.country = f[0];
    r.n = std::stoull(f[1]);
    r.mode = f[2];
    r.median_ln = cell_number(f[6]);
    r.gpdi = cell_number(f[7]);
    r.ci95 = cell_number(f[8]);
    r.status = f[11];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::map<std::string, std::string> parse_labels(const std::vector<std::string>& entries) {
  std::map<std::string, std::string> out;
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(fmt::format("label '{}' is not name=label", e));
    out[e.substr(0, eq)] = e.substr(eq + 1);
  }
  return out;
}

// Every non-empty subset, by size and then in combination order.
std::vector<std::vector<std::string>> all_subsets(const std::vector<std::string>& factors) {
  if (factors.size() == 3) return three_factor_sets(factors[0], factors[1], factors[2]);
  std::vector<std::vector<std::string>> out;
  const std::size_t m = factors.size();
  for (std::size_t size = 1; size <= m; ++size) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (true) {
      std::vector<std::string> s;
      for (auto i : idx) s.push_back(factors[i]);
      out.push_back(std::move(s));
      std::size_t pos = size;
      while (pos > 0 && idx[pos - 1] == m - size + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t k = pos; k < size; ++k) idx[k] = idx[k - 1] + 1;
    }
  }
  return out;
}

// Column z-scores; zero-spread columns are only centered.
Eigen::MatrixXd zscore_columns(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m.rowwise() - m.colwise().mean();
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double sd = std::sqrt(out.col(c).squaredNorm() / static_cast<double>(out.rows()));
    if (sd >= 1e-12) out.col(c) /= sd;
  }
  return out;
}

Eigen::MatrixXd to_dense(const FacetMatrix& m) { return Eigen::MatrixXd(m); }

}  // namespace

std::string sha256_file(const fs::path& path) {
  const std::string bytes = read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string RunConfig::echo_json() const {
  Json j;
  j["input"] = input;
  j["scored"] = scored;
  j["keying"] = keying;
  j["covariates"] = covariates;
  j["coding"] = coding;
  j["centering"] = centering;
  j["min_group_size"] = min_group_size;
  j["exact_cap"] = exact_cap;
  j["pair_budget"] = pair_budget;
  j["seed"] = seed;
  j["ks_cap"] = ks_cap;
  j["linkage"] = linkage;
  j["metric"] = metric;
  j["k_candidates"] = k_candidates;
  j["subsample"] = subsample;
  j["cluster_countries"] = cluster_countries;
  j["country_k"] = country_k;
  j["response"] = response;
  j["factors"] = factors;
  j["null_features"] = null_features;
  j["labels"] = labels;
  j["standardize"] = standardize;
  return j.dump();
}

int cmd_validate(const RunConfig& cfg) {
  return run_stage(cfg, "validate", [&](StageOutput& out) {
    Loaded l = load_panels(cfg);
    OJson j;
    j["seed"] = cfg.seed;
    j["source"] = l.source;
    j["records_read"] = l.read.records_read;
    j["records_admitted"] = l.read.rows.size();
    OJson rejected = OJson::array();
    for (const auto& r : l.read.rejected) rejected.push_back({{"line", r.line}, {"reason", r.reason}});
    j["rejected"] = std::move(rejected);
    OJson groups = OJson::array();
    for (const auto& p : l.set.panels) groups.push_back({{"country", p.group_code}, {"n", p.size()}});
    j["admitted_groups"] = std::move(groups);
    j["excluded"] = io::exclusions_json(l.set.excluded);
    if (!cfg.covariates.empty()) {
      auto in = open_input(cfg.covariates, "covariates file");
      const CovariateTable t = read_covariates_csv(in);
      j["covariates"] = {{"rows", t.groups.size()}, {"columns", t.columns}};
    }
    out.write("validation.json", dump(j));
    out.info()["records_read"] = l.read.records_read;
    out.info()["rejected"] = l.read.rejected.size();
    out.info()["admitted_groups"] = l.set.panels.size();
    if (l.set.panels.empty()) throw Error(ErrorCode::EmptyAnalysis, "no group meets the minimum size");
  });
}

int cmd_gpdi(const RunConfig& cfg) {
  return run_stage(cfg, "gpdi", [&](StageOutput& out) {
    Loaded l = load_panels(cfg);
    out.write("exclusions.json", dump(io::exclusions_json(l.set.excluded)));
    out.write("rejects.json", rejects_json(l.read.rejected).dump(2) + "\n");
    if (l.set.panels.empty()) throw Error(ErrorCode::EmptyAnalysis, "no group meets the minimum size");

    const CenteredPanels centered = center_panels(std::move(l.set.panels), parse_centering(cfg.centering));
    DigestOptions opts;
    opts.exact_cap = cfg.exact_cap;
    opts.pair_budget = cfg.pair_budget;
    opts.seed = cfg.seed;

    std::string table = "country,n,mode,pairs_total,pairs_positive,sample_size,median_ln,gpdi,ci95,gpdi_ci95,seed,status\n";
    std::vector<SimilarityDigest> digests;
    Json modes = Json::object();
    for (const auto& panel : centered.panels) {
      SimilarityDigest d;
      try {
        d = pairwise_digest(panel, opts);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) throw;
        table += fmt::format("{},{},NA,{},NA,NA,NA,NA,NA,NA,{},{}\n", panel.group_code, panel.size(),
                             pair_count(panel.size()), cfg.seed, to_string(e.code()));
        modes[panel.group_code] = "failed";
        continue;
      }
      modes[d.group_code] = to_string(d.mode);
      std::string status = "OK", median = "NA", value = "NA", ci = "NA", gci = "NA";
      try {
        const GpdiResult g = gpdi(d);
        median = io::fixed(g.median_ln, 10);
        value = io::fixed(g.d, 10);
        ci = io::fixed(g.ci95_halfwidth, 10);
        gci = io::fixed(g.gpdi_ci95_halfwidth, 10);
      } catch (const Error& e) {
        status = std::string(to_string(e.code()));
      }
      table += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", d.group_code, d.n, to_string(d.mode),
                           d.pair_count_total, d.pair_count_positive, d.retained.size(), median, value, ci, gci,
                           cfg.seed, status);
      OJson dj = io::digest_json(d);
      out.write("digests/" + d.group_code + ".json", dump(dj));
      std::ostringstream sample;
      io::write_sample(sample, d.retained);
      out.write("samples/" + d.group_code + ".f64", sample.str());
      digests.push_back(std::move(d));
    }
    out.write("gpdi.csv", table);
    std::ostringstream ridge;
    io::write_ridgeline_csv(ridge, digests);
    out.write("ridgeline.csv", ridge.str());

    OJson transform;
    transform["mode"] = to_string(centered.record.mode);
    transform["mean"] = std::vector<double>(centered.record.mean.begin(), centered.record.mean.end());
    transform["scale"] = std::vector<double>(centered.record.scale.begin(), centered.record.scale.end());
    transform["seed"] = cfg.seed;
    out.write("centering.json", dump(transform));

    out.info()["source"] = l.source;
    out.info()["records_read"] = l.read.records_read;
    out.info()["rejected"] = l.read.rejected.size();
    out.info()["excluded_groups"] = l.set.excluded.size();
    out.info()["modes"] = modes;
  });
}

int cmd_ks(const RunConfig& cfg) {
  return run_stage(cfg, "ks", [&](StageOutput& out) {
    const fs::path root = cfg.out;
    std::vector<SimilarityDigest> digests;
    for (const auto& row : read_gpdi_csv(root)) {
      if (row.mode == "NA") continue;
      auto dj = open_stage_file(root, "digests/" + row.country + ".json");
      SimilarityDigest d = io::digest_from_json(OJson::parse(dj));
      auto sj = open_stage_file(root, "samples/" + row.country + ".f64");
      d.retained = io::read_sample(sj);
      digests.push_back(std::move(d));
    }
    if (digests.size() < 2) throw Error(ErrorCode::EmptyAnalysis, "KS needs at least two digested groups");
    const KsMatrix m = ks_matrix(digests, cfg.ks_cap, cfg.seed);
    std::ostringstream csv_out;
    io::write_ks_csv(csv_out, m);
    out.write("ks.csv", csv_out.str());
    out.write("ks_heatmap.json", dump(io::ks_heatmap_json(m)));
    out.info()["tests"] = m.tests();
  });
}

int cmd_cluster(const RunConfig& cfg) {
  return run_stage(cfg, "cluster", [&](StageOutput& out) {
    const Metric metric = parse_metric(cfg.metric);
    const Linkage linkage = parse_linkage(cfg.linkage);
    Loaded l = load_panels(cfg);
    const auto& panels = l.set.panels;
    if (panels.size() < 2) throw Error(ErrorCode::EmptyAnalysis, "country clustering needs at least two groups");

    OJson summary;
    summary["seed"] = cfg.seed;
    summary["linkage"] = to_string(linkage);
    summary["metric"] = to_string(metric);
    summary["subsample"] = cfg.subsample;

    // Cross-country tree on standardized per-facet medians.
    const Eigen::MatrixXd medians = group_medians(panels);
    const Eigen::MatrixXd points = zscore_columns(medians);
    std::vector<std::string> codes;
    for (const auto& p : panels) codes.push_back(p.group_code);
    const LinkageTree tree = hcluster(points, metric, linkage, codes);
    out.write("countries.nwk", io::newick(tree) + "\n");
    out.write("countries_merges.json", dump(io::merges_json(tree)));
    std::string med = "country";
    for (int f = 1; f <= kFacets; ++f) med += fmt::format(",f{:02d}", f);
    med += '\n';
    for (std::size_t g = 0; g < panels.size(); ++g) {
      med += codes[g];
      for (int f = 0; f < kFacets; ++f) med += "," + io::num(medians(static_cast<Eigen::Index>(g), f));
      med += '\n';
    }
    out.write("countries_medians.csv", med);

    const int macro_k = std::clamp(cfg.country_k, 1, static_cast<int>(panels.size()));
    const auto macro = cut_labels(tree, macro_k);
    summary["country_k"] = macro_k;
    OJson countries = OJson::array();
    for (std::size_t g = 0; g < panels.size(); ++g) countries.push_back({{"country", codes[g]}, {"cluster", macro[g]}});
    summary["countries"] = std::move(countries);

    // In-country clustering of (subsampled) members.
    const std::set<std::string> only(cfg.cluster_countries.begin(), cfg.cluster_countries.end());
    OJson individuals = OJson::array();
    for (const auto& panel : panels) {
      if (!only.empty() && !only.count(panel.group_code)) continue;
      OJson entry;
      entry["country"] = panel.group_code;
      entry["n"] = panel.size();
      try {
        const GroupPanel sub = subsample_panel(panel, cfg.subsample, cfg.seed);
        entry["subsample_n"] = sub.size();
        const Eigen::MatrixXd pts = zscore_columns(to_dense(sub.members));
        const LinkageTree t = hcluster(pts, metric, linkage);
        const KSelection sel = select_k(t, cfg.k_candidates, pts);
        entry["chosen_k"] = sel.k;
        OJson table = OJson::array();
        for (const auto& row : sel.table) {
          table.push_back({{"k", row.k}, {"silhouette", row.silhouette_mean}, {"defined", row.silhouette_defined}});
        }
        entry["silhouettes"] = std::move(table);
        std::ostringstream sil, heat;
        io::write_silhouette_csv(sil, sel);
        out.write("individuals/" + panel.group_code + "_silhouette.csv", sil.str());
        const auto chosen = std::find_if(sel.table.begin(), sel.table.end(), [&](const auto& r) { return r.k == sel.k; });
        io::write_cluster_heatmap_csv(heat, pts, *chosen);
        out.write("individuals/" + panel.group_code + "_heatmap.csv", heat.str());
      } catch (const Error& e) {
        entry["error"] = e.what();
      }
      individuals.push_back(std::move(entry));
    }
    summary["individuals"] = std::move(individuals);
    out.write("clusters.json", dump(summary));
    out.info()["countries"] = panels.size();
  });
}

int cmd_regress(const RunConfig& cfg) {
  return run_stage(cfg, "regress", [&](StageOutput& out) {
    auto cin = open_input(cfg.covariates, "covariates file");
    CovariateTable table = read_covariates_csv(cin);
    std::map<std::string, double> index;
    for (const auto& row : read_gpdi_csv(cfg.out)) {
      if (row.status == "OK") index[row.country] = row.gpdi;
    }
    table.set_column("gpdi", index);
    if (cfg.factors.empty()) throw ConfigError("--factors needs at least one column");
    const auto labels = parse_labels(cfg.labels);

    OJson report;
    report["seed"] = cfg.seed;
    report["response"] = cfg.response;
    report["factors"] = cfg.factors;
    const ModelLadder ladder = model_ladder(table, cfg.response, all_subsets(cfg.factors), cfg.standardize, labels);
    if (ladder.n_complete == 0) throw Error(ErrorCode::InsufficientRows, "no complete rows for the ladder");
    std::ostringstream csv_out;
    io::write_ladder_csv(csv_out, ladder);
    out.write("ladder.csv", csv_out.str());
    report["ladder"] = io::ladder_json(ladder);

    if (cfg.factors.size() >= 2) {
      try {
        const auto v = vif(table, cfg.factors);
        OJson vj = OJson::array();
        for (std::size_t i = 0; i < v.size(); ++i) vj.push_back({{"name", cfg.factors[i]}, {"vif", v[i]}});
        report["vif"] = std::move(vj);
      } catch (const Error& e) {
        report["vif"] = {{"error", e.what()}};
      }
    }

    if (!cfg.null_features.empty()) {
      std::vector<std::vector<std::string>> sets{cfg.null_features, cfg.null_features};
      sets[1].push_back("gpdi");
      report["null_vs_personality"] = io::ladder_json(model_ladder(table, cfg.response, sets, cfg.standardize, labels));
    }

    // Response against the index alone: linear and parabolic fits, correlation.
    std::vector<double> x, y;
    const auto yc = table.column_index(cfg.response);
    const auto gc = table.column_index("gpdi");
    if (!yc) throw ConfigError(fmt::format("no column named '{}'", cfg.response));
    for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
      const double xv = table.values(r, *gc), yv = table.values(r, *yc);
      if (std::isfinite(xv) && std::isfinite(yv)) {
        x.push_back(xv);
        y.push_back(yv);
      }
    }
    OJson poly;
    for (int degree : {1, 2}) {
      try {
        poly[degree == 1 ? "linear" : "parabolic"] = io::poly_json(poly_fit(x, y, degree));
      } catch (const Error& e) {
        poly[degree == 1 ? "linear" : "parabolic"] = {{"error", e.what()}};
      }
    }
    report["poly"] = std::move(poly);

    OJson corr = OJson::array();
    for (const auto& f : cfg.factors) {
      const auto fc = table.column_index(f);
      if (!fc) continue;
      std::vector<double> a, b;
      for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
        if (std::isfinite(table.values(r, *fc)) && std::isfinite(table.values(r, *yc))) {
          a.push_back(table.values(r, *fc));
          b.push_back(table.values(r, *yc));
        }
      }
      try {
        const auto c = pearson(a, b);
        corr.push_back({{"factor", f}, {"r", c.r}, {"n", c.n}, {"p_value", c.p_value}});
      } catch (const Error& e) {
        corr.push_back({{"factor", f}, {"error", e.what()}});
      }
    }
    report["correlations"] = std::move(corr);
    out.write("regression.json", dump(report));
    out.info()["models"] = ladder.rows.size();
    out.info()["n_complete"] = ladder.n_complete;
  });
}

int cmd_report(const RunConfig& cfg) {
  return run_stage(cfg, "report", [&](StageOutput& out) {
    const fs::path root = cfg.out;
    for (const char* f : {"gpdi.csv", "ks.csv", "clusters.json", "ladder.csv", "regression.json"}) {
      if (!fs::exists(root / f)) throw MissingStageError(fmt::format("missing stage output '{}'", (root / f).string()));
    }
    const auto rows = read_gpdi_csv(root);

    struct KsTally {
      std::size_t tests = 0, significant = 0;
      double sum_d = 0;
    };
    std::map<std::string, KsTally> tally;
    KsTally all;
    {
      auto in = open_stage_file(root, "ks.csv");
      csv::Reader reader(in);
      std::vector<std::string> f;
      reader.next(f);
      while (reader.next(f)) {
        if (f.size() != 4) throw Error(ErrorCode::MalformedRecord, "ks.csv row is malformed");
        const double d = cell_number(f[2]), p = cell_number(f[3]);
        if (std::isnan(d)) continue;
        for (auto* t : {&tally[f[0]], &tally[f[1]], &all}) {
          ++t->tests;
          t->sum_d += d;
          if (p < 0.05) ++t->significant;
        }
      }
    }
    auto cj = open_stage_file(root, "clusters.json");
    const OJson clusters = OJson::parse(cj);
    std::map<std::string, int> macro;
    for (const auto& c : clusters.at("countries")) macro[c.at("country").get<std::string>()] = c.at("cluster").get<int>();
    std::map<std::string, OJson> inner;
    for (const auto& c : clusters.at("individuals")) inner[c.at("country").get<std::string>()] = c;
    auto rj = open_stage_file(root, "regression.json");
    const OJson regression = OJson::parse(rj);

    OJson report;
    report["schema"] = "gpdi-report/1";
    report["engine"] = {{"name", "gpdi"}, {"version", kEngineVersion}};
    report["seed"] = cfg.seed;
    report["config"] = OJson::parse(cfg.echo_json());
    OJson groups = OJson::array();
    const auto num_or_null = [](double v) { return std::isfinite(v) ? OJson(v) : OJson(nullptr); };
    for (const auto& r : rows) {
      OJson g;
      g["country"] = r.country;
      g["n"] = r.n;
      g["mode"] = r.mode;
      g["status"] = r.status;
      g["gpdi"] = num_or_null(r.gpdi);
      g["median_ln"] = num_or_null(r.median_ln);
      g["ci95"] = num_or_null(r.ci95);
      const KsTally& t = tally[r.country];
      g["ks"] = {{"tests", t.tests},
                 {"significant_0_05", t.significant},
                 {"mean_d", t.tests ? OJson(t.sum_d / static_cast<double>(t.tests)) : OJson(nullptr)}};
      OJson cl;
      cl["macro_cluster"] = macro.count(r.country) ? OJson(macro[r.country]) : OJson(nullptr);
      const auto it = inner.find(r.country);
      cl["chosen_k"] = it != inner.end() && it->second.contains("chosen_k") ? it->second["chosen_k"] : OJson(nullptr);
      g["cluster"] = std::move(cl);
      groups.push_back(std::move(g));
    }
    report["groups"] = std::move(groups);
    report["ks"] = {{"tests", all.tests},
                    {"significant_0_05", all.significant},
                    {"mean_d", all.tests ? OJson(all.sum_d / static_cast<double>(all.tests)) : OJson(nullptr)}};
    report["regression"] = {{"ladder", regression.at("ladder")},
                            {"vif", regression.value("vif", OJson(nullptr))},
                            {"poly", regression.value("poly", OJson(nullptr))},
                            {"correlations", regression.value("correlations", OJson(nullptr))}};
    if (regression.contains("null_vs_personality")) report["regression"]["null_vs_personality"] = regression["null_vs_personality"];
    out.write("report.json", dump(report));
    out.info()["groups"] = rows.size();
  });
}

int run(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"Within-group personality diversity analytics"};
  app.set_config("--config", "", "TOML/INI file holding any of the flags below");
  app.require_subcommand(1);

  app.add_option("--input", cfg.input, "Raw item CSV: respondent_id,country,age,sex,i001..i300");
  app.add_option("--scored", cfg.scored, "Scored CSV: respondent_id,country,age,sex,f01..f30");
  app.add_option("--keying", cfg.keying, "Keying CSV: item_index,facet_index,reverse");
  app.add_option("--covariates", cfg.covariates, "Covariate CSV: country,<columns...>");
  app.add_option("--coding", cfg.coding, "Item coding lo-hi")->capture_default_str();
  app.add_option("--centering", cfg.centering, "none | global-mean | global-zscore | group-mean")->capture_default_str();
  app.add_option("--min-group-size", cfg.min_group_size, "Smallest admitted group")->capture_default_str();
  app.add_option("--exact-cap", cfg.exact_cap, "Largest pair count digested exactly")->capture_default_str();
  app.add_option("--pair-budget", cfg.pair_budget, "Sampled pairs / retained values per group")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Seed for every sampled quantity")->capture_default_str();
  app.add_option("--ks-cap", cfg.ks_cap, "Values per group entering each KS test")->capture_default_str();
  app.add_option("--linkage", cfg.linkage, "ward | average | complete")->capture_default_str();
  app.add_option("--metric", cfg.metric, "euclidean | cosine")->capture_default_str();
  app.add_option("--k-candidates", cfg.k_candidates, "Cluster counts compared by silhouette")->delimiter(',')->capture_default_str();
  app.add_option("--subsample", cfg.subsample, "Member fraction for in-country clustering")->capture_default_str();
  app.add_option("--cluster-country", cfg.cluster_countries, "Restrict in-country clustering")->delimiter(',');
  app.add_option("--country-k", cfg.country_k, "Clusters cut from the country dendrogram")->capture_default_str();
  app.add_option("--response", cfg.response, "Regression response column")->capture_default_str();
  app.add_option("--factors", cfg.factors, "Ladder factors; 'gpdi' is the index column")->delimiter(',')->capture_default_str();
  app.add_option("--null-features", cfg.null_features, "Null-model columns")->delimiter(',');
  app.add_option("--labels", cfg.labels, "Display names, name=label")->delimiter(',');
  app.add_flag("!--no-standardize", cfg.standardize, "Fit on raw predictors");
  app.add_option("--threads", cfg.threads, "Worker threads (0 = all cores)")->envname("GPDI_THREADS");
  app.add_flag("--timings", cfg.timings, "Record stage timings in the manifest");
  app.add_option("--out", cfg.out, "Output directory")->capture_default_str();

  std::string chosen;
  for (const char* name : {"gpdi", "ks", "cluster", "regress", "report", "validate"}) {
    app.add_subcommand(name)->fallthrough()->callback([&chosen, name] { chosen = name; });
  }
  app.get_subcommand("gpdi")->description("Digest pairwise similarities and compute the index per group");
  app.get_subcommand("ks")->description("Pairwise KS tests over the digested groups");
  app.get_subcommand("cluster")->description("Country dendrogram and in-country cluster selection");
  app.get_subcommand("regress")->description("Adjusted-R^2 model ladder, VIF, polynomial fits");
  app.get_subcommand("report")->description("Join every stage into one JSON bundle");
  app.get_subcommand("validate")->description("Parse and check inputs only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    parse_coding(cfg.coding);
    parse_centering(cfg.centering);
    parse_linkage(cfg.linkage);
    parse_metric(cfg.metric);
    if (!(cfg.subsample > 0 && cfg.subsample <= 1)) throw ConfigError("--subsample must lie in (0, 1]");
    if (cfg.pair_budget < kMinPairBudget) throw ConfigError(fmt::format("--pair-budget must be at least {}", kMinPairBudget));
    if (cfg.min_group_size < 2) throw ConfigError("--min-group-size must be at least 2");
    if (cfg.ks_cap < 2) throw ConfigError("--ks-cap must be at least 2");
    for (const auto& path : {cfg.input, cfg.scored, cfg.keying, cfg.covariates}) {
      if (!path.empty() && !fs::exists(path)) throw ConfigError(fmt::format("path '{}' does not exist", path));
    }
  } catch (const std::exception& e) {
    std::cerr << "gpdi: config error: " << e.what() << '\n';
    return kConfigError;
  }
  set_thread_count(cfg.threads);

  if (chosen == "gpdi") return cmd_gpdi(cfg);
  if (chosen == "ks") return cmd_ks(cfg);
  if (chosen == "cluster") return cmd_cluster(cfg);
  if (chosen == "regress") return cmd_regress(cfg);
  if (chosen == "report") return cmd_report(cfg);
  return cmd_validate(cfg);
}

}  // namespace gpdi::cli
