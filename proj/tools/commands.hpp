#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpdi::cli {

inline constexpr const char* kEngineVersion = "1.0.0";

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kDataError = 3,
  kMissingStage = 4,
};

/// Bad flags, unreadable paths, out-of-range knobs.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A prerequisite stage output is absent.
struct MissingStageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string input;       // raw item responses
  std::string scored;      // pre-scored facets
  std::string keying;      // optional with --input
  std::string covariates;
  std::string coding = "1-5";
  std::string centering = "global-zscore";
  std::size_t min_group_size = 36;
  std::uint64_t exact_cap = 200'000'000;
  std::uint64_t pair_budget = 5'000'000;
  std::uint64_t seed = 42;
  std::size_t ks_cap = 100'000;
  std::string linkage = "ward";
  std::string metric = "euclidean";
  std::vector<int> k_candidates{8, 13};
  double subsample = 0.1;
  std::vector<std::string> cluster_countries;  // empty: every admitted group
  int country_k = 3;
  std::string response = "gdp_per_person_employed";
  std::vector<std::string> factors{"expropriation_risk", "immigration", "gpdi"};
  std::vector<std::string> null_features;
  std::vector<std::string> labels{"gdp_per_person_employed=GDP", "expropriation_risk=Expropriation risk",
                                  "immigration=Immigration", "gpdi=Ψ-GPDI"};
  bool standardize = true;
  unsigned threads = 0;
  bool timings = false;
  std::string out = "gpdi-out";

  /// Canonical echo embedded in outputs. Omits the thread count and output
  /// directory, which never change results.
  std::string echo_json() const;
};

int cmd_gpdi(const RunConfig& cfg);
int cmd_ks(const RunConfig& cfg);
int cmd_cluster(const RunConfig& cfg);
int cmd_regress(const RunConfig& cfg);
int cmd_report(const RunConfig& cfg);
int cmd_validate(const RunConfig& cfg);

/// Parses argv, dispatches, and maps failures onto exit codes.
int run(int argc, char** argv);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace gpdi::cli
