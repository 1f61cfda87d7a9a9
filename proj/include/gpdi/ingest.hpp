#pragma once

#include "gpdi/types.hpp"

#include <array>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace gpdi {

/// Likert coding of a single item. Facet sums then lie in [10*lo, 10*hi].
struct ItemCoding {
  int lo = 1;
  int hi = 5;

  double facet_min() const noexcept { return kItemsPerFacet * lo; }
  double facet_max() const noexcept { return kItemsPerFacet * hi; }
};

/// Parses "1-5" style coding strings.
ItemCoding parse_coding(const std::string& text);

enum class Sex { Unspecified, Male, Female, Other };

struct ItemResponseRecord {
  std::string respondent_id;
  std::string group_code;
  std::optional<int> age;
  Sex sex = Sex::Unspecified;
  std::vector<int> items;  // 300 values expected
};

/// Facet membership and reverse-key flag for each of the 300 items.
struct Keying {
  std::array<int, kItems> facet{};
  std::array<bool, kItems> reverse{};

  /// The inventory's native layout: item i belongs to facet (i mod 30), none reversed.
  static Keying cyclic();
  /// CSV `item_index,facet_index,reverse`, 1-based indices.
  static Keying read_csv(std::istream& in);

  /// Throws MALFORMED_RECORD unless every facet owns exactly ten items.
  void validate() const;
};

/// Trims and upper-cases; returns nullopt unless the result is two letters A-Z.
std::optional<std::string> normalize_group_code(std::string_view raw);

/// Sums each facet's ten items, flipping reverse-keyed items as lo+hi-v.
/// Throws MALFORMED_RECORD on a wrong item count or an out-of-range value.
FacetRow score_items(const ItemResponseRecord& record, const Keying& keying,
                     ItemCoding coding = {});

struct ScoredRow {
  std::string respondent_id;
  std::string group_code;
  FacetRow facets;
};

struct RejectedRecord {
  std::size_t line = 0;
  std::string reason;
};

struct ReadResult {
  std::vector<ScoredRow> rows;
  std::vector<RejectedRecord> rejected;
  std::size_t records_read = 0;
};

/// Input A: `respondent_id,country,age,sex,i001..i300`. Bad rows are rejected
/// with their line number; a bad header throws MALFORMED_RECORD.
ReadResult read_raw_csv(std::istream& in, const Keying& keying, ItemCoding coding = {});
/// Input B: `respondent_id,country,age,sex,f01..f30`.
ReadResult read_scored_csv(std::istream& in, ItemCoding coding = {});

struct ExcludedGroup {
  std::string group_code;
  std::size_t n = 0;
  std::string reason;
};

struct PanelSet {
  std::vector<GroupPanel> panels;  // sorted by group code
  std::vector<ExcludedGroup> excluded;
};

inline constexpr std::size_t kDefaultMinGroupSize = 36;

/// Groups rows by code, keeping stable input order inside each group, and
/// drops groups smaller than `min_group_size`.
PanelSet build_panels(std::span<const ScoredRow> rows,
                      std::size_t min_group_size = kDefaultMinGroupSize);

enum class CenteringMode { None, GlobalMean, GlobalZscore, GroupMean };

CenteringMode parse_centering(const std::string& text);
std::string to_string(CenteringMode mode);

/// Per-facet statistics used by a centering pass, kept for reproducibility.
/// Scales are population standard deviations (1 when not scaling).
struct CenteringRecord {
  CenteringMode mode = CenteringMode::None;
  FacetRow mean = FacetRow::Zero();
  FacetRow scale = FacetRow::Ones();
  std::map<std::string, FacetRow> group_means;  // GroupMean mode only
};

struct CenteredPanels {
  std::vector<GroupPanel> panels;
  CenteringRecord record;
};

/// Global modes use statistics over the union of all members. Throws
/// DEGENERATE_FACET in zscore mode when a facet's sd is below 1e-12.
CenteredPanels center_panels(std::vector<GroupPanel> panels, CenteringMode mode);

/// Scored-format serialization; byte-stable for identical panels.
void write_panels_csv(std::ostream& out, std::span<const GroupPanel> panels);

/// Group-level covariates keyed by country code. Missing cells are NaN.
struct CovariateTable {
  std::vector<std::string> groups;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // groups x columns

  std::optional<Eigen::Index> column_index(const std::string& name) const;
  std::optional<Eigen::Index> row_index(const std::string& group) const;
  /// Appends or overwrites a column; groups absent from `by_group` get NaN.
  void set_column(const std::string& name, const std::map<std::string, double>& by_group);
};

/// CSV `country,<columns...>`. Empty and "NA" cells are missing; any other
/// non-numeric or non-finite cell, or a duplicate country, throws MALFORMED_RECORD.
CovariateTable read_covariates_csv(std::istream& in);

}  // namespace gpdi
