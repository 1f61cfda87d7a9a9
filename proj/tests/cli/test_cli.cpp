#include "harness.hpp"
#include "commands.hpp"

#include <doctest.h>
#include <fmt/format.h>
#include <json.hpp>

using namespace harness;
using nlohmann::json;

namespace {

const std::string kClusterFlags = "--subsample 0.5";

std::size_t csv_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n - 1;
}

void write_scored(const fs::path& p, const std::vector<std::pair<std::string, int>>& groups, bool constant_facet) {
  std::ofstream out(p);
  out << "respondent_id,country,age,sex";
  for (int k = 1; k <= 30; ++k) out << fmt::format(",f{:02d}", k);
  out << '\n';
  int id = 0;
  for (const auto& [code, n] : groups) {
    for (int i = 0; i < n; ++i, ++id) {
      out << id << ',' << code << ",30,F";
      for (int k = 0; k < 30; ++k) out << ',' << (constant_facet && k == 0 ? 30 : 10 + (id * 7 + k * 13 + i * k) % 41);
      out << '\n';
    }
  }
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("fixture index table equals the golden file") {
  const auto out = fresh("golden_gpdi");
  REQUIRE(run("gpdi " + fixture_inputs() + " --out " + out.string()).code == 0);
  CHECK(slurp(out / "gpdi.csv") == slurp(kFixture / "golden" / "gpdi.csv"));
  const auto excl = json::parse(slurp(out / "exclusions.json"));
  REQUIRE(excl.size() == 1);
  CHECK(excl[0]["country"] == "ZZ");
  CHECK(json::parse(slurp(out / "rejects.json")).size() == 3);
}

TEST_CASE("fixture ladder equals the golden file") {
  const auto out = fresh("golden_ladder");
  REQUIRE(run("gpdi " + fixture_inputs() + " --out " + out.string()).code == 0);
  REQUIRE(run("regress " + fixture_inputs() + " --out " + out.string()).code == 0);
  CHECK(slurp(out / "ladder.csv") == slurp(kFixture / "golden" / "ladder.csv"));
}

TEST_CASE("full pipeline is byte-identical across reruns and thread counts") {
  const auto a = fresh("det_1"), b = fresh("det_8"), c = fresh("det_1_again");
  REQUIRE(pipeline(a, kClusterFlags + " --threads 1") == 0);
  REQUIRE(pipeline(b, kClusterFlags + " --threads 8") == 0);
  REQUIRE(pipeline(c, kClusterFlags + " --threads 1") == 0);
  const auto ta = tree(a), tb = tree(b), tc = tree(c);
  CHECK(ta.size() > 20);
  CHECK(ta == tb);
  CHECK(ta == tc);
}

TEST_CASE("manifest hashes every emitted file") {
  const auto out = fresh("manifest");
  REQUIRE(pipeline(out, kClusterFlags) == 0);
  const auto m = json::parse(slurp(out / "manifest.json"));
  CHECK(m["engine"]["version"] == gpdi::cli::kEngineVersion);
  CHECK(m["seed"] == 42);
  const auto files = tree(out);
  CHECK(m["files"].size() == files.size() - 1);
  for (const auto& [rel, bytes] : files) {
    if (rel == "manifest.json") continue;
    REQUIRE(m["files"].contains(rel));
    CHECK(m["files"][rel] == gpdi::cli::sha256_file(out / rel));
  }
  for (const char* s : {"gpdi", "ks", "cluster", "regress", "report"}) {
    CHECK(m["stages"].contains(s));
    CHECK(m["stages"][s]["config"]["seed"] == 42);
    CHECK_FALSE(m["stages"][s].contains("timing_ms"));
  }
  CHECK(m["stages"]["gpdi"]["info"]["modes"]["US"] == "exact");
  CHECK(m["stages"]["gpdi"]["info"]["rejected"] == 3);
}

TEST_CASE("timings appear only on request") {
  const auto out = fresh("timings");
  REQUIRE(run("gpdi " + fixture_inputs() + " --timings --out " + out.string()).code == 0);
  CHECK(json::parse(slurp(out / "manifest.json"))["stages"]["gpdi"].contains("timing_ms"));
}

TEST_CASE("KS over the fixture tests every pair once") {
  const auto out = fresh("ks");
  REQUIRE(run("gpdi " + fixture_inputs() + " --out " + out.string()).code == 0);
  REQUIRE(run("ks --out " + out.string()).code == 0);
  CHECK(csv_rows(out / "ks.csv") == 66);
  CHECK(json::parse(slurp(out / "ks_heatmap.json"))["tests"] == 66);
}

TEST_CASE("cluster candidates 8 and 13 give two silhouette rows") {
  const auto out = fresh("cluster");
  REQUIRE(run("cluster " + fixture_inputs() + " " + kClusterFlags + " --k-candidates 8,13 --out " + out.string()).code == 0);
  CHECK(csv_rows(out / "individuals" / "US_silhouette.csv") == 2);
  const auto c = json::parse(slurp(out / "clusters.json"));
  CHECK(c["countries"].size() == 12);
  CHECK(c["individuals"].size() == 12);
  CHECK(slurp(out / "countries.nwk").ends_with(";\n"));
}

TEST_CASE("report without KS exits 4 naming the absent file") {
  const auto out = fresh("missing_ks");
  REQUIRE(run("gpdi " + fixture_inputs() + " --out " + out.string()).code == 0);
  REQUIRE(run("cluster " + fixture_inputs() + " " + kClusterFlags + " --out " + out.string()).code == 0);
  REQUIRE(run("regress " + fixture_inputs() + " --out " + out.string()).code == 0);
  const auto r = run("report --out " + out.string());
  CHECK(r.code == 4);
  CHECK(r.err.find("ks.csv") != std::string::npos);
  CHECK_FALSE(fs::exists(out / "report.json"));
}

TEST_CASE("later stages without the index stage exit 4") {
  const auto out = fresh("missing_gpdi");
  CHECK(run("ks --out " + out.string()).code == 4);
  CHECK(run("regress " + fixture_inputs() + " --out " + out.string()).code == 4);
}

TEST_CASE("only under-sized groups exit 3") {
  const auto out = fresh("empty");
  const auto r = run("gpdi " + fixture_inputs() + " --min-group-size 500 --out " + out.string());
  CHECK(r.code == 3);
  CHECK(r.err.find("EMPTY_ANALYSIS") != std::string::npos);
  CHECK_FALSE(fs::exists(out / "gpdi.csv"));
  CHECK_FALSE(fs::exists(out / "exclusions.json"));
}

TEST_CASE("a data error removes partial outputs") {
  const auto out = fresh("partial");
  const auto input = kWork / "constant_facet.csv";
  write_scored(input, {{"AA", 40}, {"BB", 40}}, true);
  CHECK(run("gpdi --scored " + input.string() + " --out " + out.string()).code == 3);
  CHECK_FALSE(fs::exists(out / "exclusions.json"));
  CHECK_FALSE(fs::exists(out / "rejects.json"));
}

TEST_CASE("two tiny countries give two deterministic rows") {
  const auto input = kWork / "tiny.csv";
  write_scored(input, {{"AA", 5}, {"BB", 6}}, false);
  const auto a = fresh("tiny_a"), b = fresh("tiny_b");
  REQUIRE(run("gpdi --scored " + input.string() + " --min-group-size 2 --out " + a.string()).code == 0);
  REQUIRE(run("gpdi --scored " + input.string() + " --min-group-size 2 --threads 3 --out " + b.string()).code == 0);
  CHECK(csv_rows(a / "gpdi.csv") == 2);
  CHECK(tree(a) == tree(b));
}

TEST_CASE("configuration errors exit 2") {
  const auto out = fresh("config");
  CHECK(run("gpdi --no-such-flag --out " + out.string()).code == 2);
  CHECK(run("gpdi --input /nonexistent.csv --out " + out.string()).code == 2);
  CHECK(run("gpdi " + fixture_inputs() + " --centering sideways --out " + out.string()).code == 2);
  CHECK(run("gpdi " + fixture_inputs() + " --pair-budget 5 --out " + out.string()).code == 2);
  CHECK(run("cluster " + fixture_inputs() + " --linkage ward --metric cosine --out " + out.string()).code == 3);
  CHECK(run("gpdi --out " + out.string()).code == 2);
  CHECK(run("").code == 2);
}

TEST_CASE("config file values apply and flags override them") {
  const auto cfg = kWork / "run.toml";
  {
    std::ofstream f(cfg);
    f << "seed = 7\nmin-group-size = 36\n";
  }
  const auto a = fresh("cfg_a"), b = fresh("cfg_b");
  REQUIRE(run("gpdi --config " + cfg.string() + " " + fixture_inputs() + " --out " + a.string()).code == 0);
  CHECK(json::parse(slurp(a / "manifest.json"))["seed"] == 7);
  REQUIRE(run("gpdi --config " + cfg.string() + " --seed 9 " + fixture_inputs() + " --out " + b.string()).code == 0);
  CHECK(json::parse(slurp(b / "manifest.json"))["seed"] == 9);
}

TEST_CASE("thread count falls back to the environment") {
  const auto a = fresh("env_threads");
  CHECK(run("gpdi " + fixture_inputs() + " --out " + a.string(), "GPDI_THREADS=2").code == 0);
  CHECK(run("gpdi " + fixture_inputs() + " --out " + a.string(), "GPDI_THREADS=abc").code == 2);
}

TEST_CASE("validate reports admitted and excluded groups") {
  const auto out = fresh("validate");
  REQUIRE(run("validate " + fixture_inputs() + " --out " + out.string()).code == 0);
  const auto v = json::parse(slurp(out / "validation.json"));
  CHECK(v["admitted_groups"].size() == 12);
  CHECK(v["excluded"].size() == 1);
  CHECK(v["rejected"].size() == 3);
  CHECK(v["covariates"]["rows"] == 14);
}

TEST_CASE("report joins every stage per group") {
  const auto out = fresh("report");
  REQUIRE(pipeline(out, kClusterFlags) == 0);
  const auto r = json::parse(slurp(out / "report.json"));
  CHECK(r["groups"].size() == 12);
  CHECK(r["ks"]["tests"] == 66);
  CHECK(r["regression"]["ladder"]["models"].size() == 7);
  for (const auto& g : r["groups"]) {
    CHECK(g["ks"]["tests"] == 11);
    CHECK(g["cluster"]["macro_cluster"].is_number());
  }
}

}  // TEST_SUITE
