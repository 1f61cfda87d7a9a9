#include "gpdi/ingest.hpp"

#include "gpdi/csv.hpp"
#include "gpdi/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>

namespace gpdi {
namespace {

std::optional<int> parse_int(std::string_view s) {
  s = csv::trim(s);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view s) {
  s = csv::trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<Sex> parse_sex(std::string_view raw) {
  const std::string s = lower(csv::trim(raw));
  if (s.empty() || s == "na") return Sex::Unspecified;
  if (s == "m" || s == "male" || s == "1") return Sex::Male;
  if (s == "f" || s == "female" || s == "2") return Sex::Female;
  if (s == "o" || s == "other" || s == "3") return Sex::Other;
  return std::nullopt;
}

// Shared prefix of both input layouts.
void check_header(const std::vector<std::string>& header, char prefix, int count, int width) {
  static const char* kFixed[] = {"respondent_id", "country", "age", "sex"};
  bool ok = header.size() == static_cast<std::size_t>(4 + count);
  for (std::size_t i = 0; ok && i < 4; ++i) ok = csv::trim(header[i]) == kFixed[i];
  for (int k = 0; ok && k < count; ++k) {
    ok = csv::trim(header[4 + k]) == fmt::format("{}{:0{}d}", prefix, k + 1, width);
  }
  if (!ok) {
    throw Error(ErrorCode::MalformedRecord,
                fmt::format("unexpected header; expected respondent_id,country,age,sex,{}{:0{}d}..{}{}",
                            prefix, 1, width, prefix, count));
  }
}

// Fills the leading fields; returns the rejection reason or empty.
std::string parse_prefix(const std::vector<std::string>& f, ItemResponseRecord& rec) {
  rec.respondent_id = std::string(csv::trim(f[0]));
  auto code = normalize_group_code(f[1]);
  if (!code) return fmt::format("invalid country code '{}'", f[1]);
  rec.group_code = *code;
  const auto age_text = csv::trim(f[2]);
  if (!age_text.empty() && lower(age_text) != "na") {
    rec.age = parse_int(age_text);
    if (!rec.age || *rec.age < 0) return fmt::format("invalid age '{}'", f[2]);
  }
  auto sex = parse_sex(f[3]);
  if (!sex) return fmt::format("invalid sex '{}'", f[3]);
  rec.sex = *sex;
  return {};
}

}  // namespace

ItemCoding parse_coding(const std::string& text) {
  const auto dash = text.find('-', 1);
  if (dash != std::string::npos) {
    auto lo = parse_int(std::string_view(text).substr(0, dash));
    auto hi = parse_int(std::string_view(text).substr(dash + 1));
    if (lo && hi && *lo < *hi) return {*lo, *hi};
  }
  throw Error(ErrorCode::InvalidArgument, fmt::format("item coding '{}' is not of the form lo-hi", text));
}

Keying Keying::cyclic() {
  Keying k;
  for (int i = 0; i < kItems; ++i) k.facet[i] = i % kFacets;
  return k;
}

Keying Keying::read_csv(std::istream& in) {
  Keying k;
  k.facet.fill(-1);
  csv::Reader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f) || f.size() != 3 || csv::trim(f[0]) != "item_index" ||
      csv::trim(f[1]) != "facet_index" || csv::trim(f[2]) != "reverse") {
    throw Error(ErrorCode::MalformedRecord, "keying header must be item_index,facet_index,reverse");
  }
  while (reader.next(f)) {
    if (f.size() != 3) throw Error(ErrorCode::MalformedRecord, fmt::format("keying line {} is invalid", reader.line()));
    const int item = parse_int(f[0]).value_or(0);
    const int facet = parse_int(f[1]).value_or(0);
    const int rev = parse_int(f[2]).value_or(-1);
    if (item < 1 || item > kItems || facet < 1 || facet > kFacets || (rev != 0 && rev != 1)) {
      throw Error(ErrorCode::MalformedRecord, fmt::format("keying line {} is invalid", reader.line()));
    }
    if (k.facet[item - 1] != -1) {
      throw Error(ErrorCode::MalformedRecord, fmt::format("item {} keyed twice", item));
    }
    k.facet[item - 1] = facet - 1;
    k.reverse[item - 1] = rev == 1;
  }
  k.validate();
  return k;
}

void Keying::validate() const {
  std::array<int, kFacets> counts{};
  for (int i = 0; i < kItems; ++i) {
    if (facet[i] < 0 || facet[i] >= kFacets) {
      throw Error(ErrorCode::MalformedRecord, fmt::format("item {} has no facet", i + 1));
    }
    ++counts[facet[i]];
  }
  for (int f = 0; f < kFacets; ++f) {
    if (counts[f] != kItemsPerFacet) {
      throw Error(ErrorCode::MalformedRecord,
                  fmt::format("facet {} owns {} items, expected {}", f + 1, counts[f], kItemsPerFacet));
    }
  }
}

std::optional<std::string> normalize_group_code(std::string_view raw) {
  const auto t = csv::trim(raw);
  if (t.size() != 2) return std::nullopt;
  std::string out;
  for (char c : t) {
    const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (u < 'A' || u > 'Z') return std::nullopt;
    out.push_back(u);
  }
  return out;
}

FacetRow score_items(const ItemResponseRecord& record, const Keying& keying, ItemCoding coding) {
  if (record.items.size() != static_cast<std::size_t>(kItems)) {
    throw Error(ErrorCode::MalformedRecord,
                fmt::format("expected {} items, got {}", kItems, record.items.size()));
  }
  FacetRow facets = FacetRow::Zero();
  for (int i = 0; i < kItems; ++i) {
    const int v = record.items[i];
    if (v < coding.lo || v > coding.hi) {
      throw Error(ErrorCode::MalformedRecord,
                  fmt::format("item {} value {} outside {}..{}", i + 1, v, coding.lo, coding.hi));
    }
    facets[keying.facet[i]] += keying.reverse[i] ? coding.lo + coding.hi - v : v;
  }
  return facets;
}

ReadResult read_raw_csv(std::istream& in, const Keying& keying, ItemCoding coding) {
  ReadResult out;
  csv::Reader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f)) throw Error(ErrorCode::MalformedRecord, "empty response file");
  check_header(f, 'i', kItems, 3);

  ItemResponseRecord rec;
  while (reader.next(f)) {
    ++out.records_read;
    if (f.size() != static_cast<std::size_t>(4 + kItems)) {
      out.rejected.push_back({reader.line(), fmt::format("expected {} fields, got {}", 4 + kItems, f.size())});
      continue;
    }
    rec = {};
    if (auto why = parse_prefix(f, rec); !why.empty()) {
      out.rejected.push_back({reader.line(), std::move(why)});
      continue;
    }
    rec.items.resize(kItems);
    std::string why;
    for (int i = 0; i < kItems && why.empty(); ++i) {
      auto v = parse_int(f[4 + i]);
      if (!v) why = fmt::format("item {} is missing or non-integer", i + 1);
      else rec.items[i] = *v;
    }
    if (!why.empty()) {
      out.rejected.push_back({reader.line(), std::move(why)});
      continue;
    }
    try {
      out.rows.push_back({rec.respondent_id, rec.group_code, score_items(rec, keying, coding)});
    } catch (const Error& e) {
      out.rejected.push_back({reader.line(), e.what()});
    }
  }
  return out;
}

ReadResult read_scored_csv(std::istream& in, ItemCoding coding) {
  ReadResult out;
  csv::Reader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f)) throw Error(ErrorCode::MalformedRecord, "empty scored file");
  check_header(f, 'f', kFacets, 2);

  ItemResponseRecord rec;
  while (reader.next(f)) {
    ++out.records_read;
    if (f.size() != static_cast<std::size_t>(4 + kFacets)) {
      out.rejected.push_back({reader.line(), fmt::format("expected {} fields, got {}", 4 + kFacets, f.size())});
      continue;
    }
    rec = {};
    if (auto why = parse_prefix(f, rec); !why.empty()) {
      out.rejected.push_back({reader.line(), std::move(why)});
      continue;
    }
    ScoredRow row{rec.respondent_id, rec.group_code, FacetRow::Zero()};
    std::string why;
    for (int k = 0; k < kFacets && why.empty(); ++k) {
      auto v = parse_double(f[4 + k]);
      if (!v || !std::isfinite(*v)) {
        why = fmt::format("facet {} is missing or non-numeric", k + 1);
      } else if (*v < coding.facet_min() || *v > coding.facet_max()) {
        why = fmt::format("facet {} value {} outside {}..{}", k + 1, *v, coding.facet_min(), coding.facet_max());
      } else {
        row.facets[k] = *v;
      }
    }
    if (!why.empty()) {
      out.rejected.push_back({reader.line(), std::move(why)});
      continue;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

PanelSet build_panels(std::span<const ScoredRow> rows, std::size_t min_group_size) {
  std::map<std::string, std::vector<std::size_t>> index;
  for (std::size_t i = 0; i < rows.size(); ++i) index[rows[i].group_code].push_back(i);

  PanelSet out;
  for (const auto& [code, members] : index) {
    if (members.size() < min_group_size) {
      out.excluded.push_back({code, members.size(),
                              fmt::format("fewer than {} members", min_group_size)});
      continue;
    }
    GroupPanel panel;
    panel.group_code = code;
    panel.members.resize(static_cast<Eigen::Index>(members.size()), kFacets);
    for (std::size_t r = 0; r < members.size(); ++r) {
      panel.members.row(static_cast<Eigen::Index>(r)) = rows[members[r]].facets;
    }
    out.panels.push_back(std::move(panel));
  }
  return out;
}

CenteringMode parse_centering(const std::string& text) {
  std::string t = lower(text);
  std::replace(t.begin(), t.end(), '_', '-');
  if (t == "none") return CenteringMode::None;
  if (t == "global-mean") return CenteringMode::GlobalMean;
  if (t == "global-zscore") return CenteringMode::GlobalZscore;
  if (t == "group-mean") return CenteringMode::GroupMean;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown centering mode '{}'", text));
}

std::string to_string(CenteringMode mode) {
  switch (mode) {
    case CenteringMode::None: return "none";
    case CenteringMode::GlobalMean: return "global-mean";
    case CenteringMode::GlobalZscore: return "global-zscore";
    case CenteringMode::GroupMean: return "group-mean";
  }
  return "none";
}

CenteredPanels center_panels(std::vector<GroupPanel> panels, CenteringMode mode) {
  if (panels.empty()) throw Error(ErrorCode::InvalidArgument, "no panels to center");
  CenteredPanels out;
  out.record.mode = mode;
  if (mode == CenteringMode::None) {
    out.panels = std::move(panels);
    return out;
  }

  if (mode == CenteringMode::GroupMean) {
    for (auto& p : panels) {
      const FacetRow mean = p.members.colwise().mean();
      p.members.rowwise() -= mean;
      p.space = FacetSpace::Transformed;
      out.record.group_means.emplace(p.group_code, mean);
    }
    out.panels = std::move(panels);
    return out;
  }

  // Two passes over the union of members: mean, then centered second moment.
  Eigen::Matrix<double, 1, kFacets> sum = Eigen::Matrix<double, 1, kFacets>::Zero();
  double count = 0;
  for (const auto& p : panels) {
    sum += p.members.colwise().sum();
    count += static_cast<double>(p.size());
  }
  const FacetRow mean = sum / count;
  FacetRow scale = FacetRow::Ones();
  if (mode == CenteringMode::GlobalZscore) {
    FacetRow ss = FacetRow::Zero();
    for (const auto& p : panels) ss += (p.members.rowwise() - mean).array().square().matrix().colwise().sum();
    scale = (ss / count).array().sqrt();
    for (int k = 0; k < kFacets; ++k) {
      if (!(scale[k] >= 1e-12)) {
        throw Error(ErrorCode::DegenerateFacet, fmt::format("facet {} has zero spread", k + 1));
      }
    }
  }
  for (auto& p : panels) {
    p.members.rowwise() -= mean;
    if (mode == CenteringMode::GlobalZscore) p.members.array().rowwise() /= scale.array();
    p.space = FacetSpace::Transformed;
  }
  out.record.mean = mean;
  out.record.scale = scale;
  out.panels = std::move(panels);
  return out;
}

void write_panels_csv(std::ostream& out, std::span<const GroupPanel> panels) {
  out << "respondent_id,country,age,sex";
  for (int k = 1; k <= kFacets; ++k) out << fmt::format(",f{:02d}", k);
  out << '\n';
  for (const auto& p : panels) {
    for (Eigen::Index r = 0; r < p.members.rows(); ++r) {
      std::string line = fmt::format("{}-{},{},,", p.group_code, r + 1, p.group_code);
      for (int k = 0; k < kFacets; ++k) line += fmt::format(",{}", p.members(r, k));
      out << line << '\n';
    }
  }
}

std::optional<Eigen::Index> CovariateTable::column_index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - columns.begin());
}

std::optional<Eigen::Index> CovariateTable::row_index(const std::string& group) const {
  auto it = std::find(groups.begin(), groups.end(), group);
  if (it == groups.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - groups.begin());
}

void CovariateTable::set_column(const std::string& name, const std::map<std::string, double>& by_group) {
  Eigen::Index col;
  if (auto existing = column_index(name)) {
    col = *existing;
  } else {
    columns.push_back(name);
    values.conservativeResize(static_cast<Eigen::Index>(groups.size()), values.cols() + 1);
    col = values.cols() - 1;
  }
  for (std::size_t r = 0; r < groups.size(); ++r) {
    auto it = by_group.find(groups[r]);
    values(static_cast<Eigen::Index>(r), col) =
        it == by_group.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
  }
}

CovariateTable read_covariates_csv(std::istream& in) {
  CovariateTable table;
  csv::Reader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f) || f.size() < 2 || csv::trim(f[0]) != "country") {
    throw Error(ErrorCode::MalformedRecord, "covariate header must start with 'country' and name at least one column");
  }
  std::set<std::string> seen_cols;
  for (std::size_t c = 1; c < f.size(); ++c) {
    std::string name(csv::trim(f[c]));
    if (name.empty() || !seen_cols.insert(name).second) {
      throw Error(ErrorCode::MalformedRecord, fmt::format("bad or duplicate covariate column '{}'", name));
    }
    table.columns.push_back(std::move(name));
  }
  const std::size_t width = table.columns.size();
  std::vector<std::vector<double>> rows;
  std::set<std::string> seen_groups;
  while (reader.next(f)) {
    if (f.size() != width + 1) {
      throw Error(ErrorCode::MalformedRecord,
                  fmt::format("covariates line {}: expected {} fields, got {}", reader.line(), width + 1, f.size()));
    }
    auto code = normalize_group_code(f[0]);
    if (!code) throw Error(ErrorCode::MalformedRecord, fmt::format("covariates line {}: bad country '{}'", reader.line(), f[0]));
    if (!seen_groups.insert(*code).second) {
      throw Error(ErrorCode::MalformedRecord, fmt::format("covariates: duplicate country {}", *code));
    }
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      const auto cell = csv::trim(f[c + 1]);
      if (cell.empty() || cell == "NA") {
        row[c] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      auto v = parse_double(cell);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::MalformedRecord,
                    fmt::format("covariates line {}: column {} value '{}' is not a finite number",
                                reader.line(), table.columns[c], cell));
      }
      row[c] = *v;
    }
    table.groups.push_back(*code);
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return table;
}

}  // namespace gpdi
