#pragma once

#include "gpdi/clustering.hpp"
#include "gpdi/ingest.hpp"
#include "gpdi/regression.hpp"
#include "gpdi/similarity.hpp"
#include "gpdi/stats.hpp"

#include <json.hpp>

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

// Plot-ready serializations. Every writer is byte-stable for identical input.
namespace gpdi::io {

using Json = nlohmann::ordered_json;

/// `{country, n, pairs_total, pairs_positive, mode, seed, median_ln, gpdi,
/// ci95, histogram:{lo,width,counts[],underflow}}`; `gpdi` and `median_ln`
/// are null with an `error` field when the index is undefined.
Json digest_json(const SimilarityDigest& digest);

/// Restores everything except the retained sample, which lives in its own file.
SimilarityDigest digest_from_json(const Json& j);

/// Retained ln-similarities as little-endian float64.
void write_sample(std::ostream& out, std::span<const double> values);
std::vector<double> read_sample(std::istream& in);

/// `country,bin_lo,density` over each digest's occupied bin range.
void write_ridgeline_csv(std::ostream& out, std::span<const SimilarityDigest> digests);

void write_ks_csv(std::ostream& out, const KsMatrix& m);
Json ks_heatmap_json(const KsMatrix& m);

/// Newick string; branch length is the parent's merge height minus the child's.
std::string newick(const LinkageTree& tree);
Json merges_json(const LinkageTree& tree);

/// Members grouped by cluster: `member,cluster,f01..f30`.
void write_cluster_heatmap_csv(std::ostream& out, const Eigen::MatrixXd& points,
                               const ClusterAssignment& assignment);
void write_silhouette_csv(std::ostream& out, const KSelection& selection);

/// `model,predictors,n,r2,adj_r2,stars`, with values to six decimals.
void write_ladder_csv(std::ostream& out, const ModelLadder& ladder);
Json regression_json(const RegressionReport& report);
Json ladder_json(const ModelLadder& ladder);
Json poly_json(const PolyFit& fit);

Json exclusions_json(std::span<const ExcludedGroup> excluded);

/// Shortest round-trip decimal.
std::string num(double v);
/// Fixed decimals.
std::string fixed(double v, int decimals);

}  // namespace gpdi::io
