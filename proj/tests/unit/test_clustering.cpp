#include "gpdi/clustering.hpp"
#include "gpdi/error.hpp"
#include "../oracles.hpp"

#include <doctest.h>

#include <map>
#include <random>
#include <set>

using namespace gpdi;

namespace {

Eigen::MatrixXd random_points(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Eigen::MatrixXd m(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < dim; ++d) m(i, d) = z(rng);
  }
  return m;
}

oracle::Link to_oracle(Linkage l) {
  return l == Linkage::Ward ? oracle::Link::Ward : l == Linkage::Average ? oracle::Link::Average : oracle::Link::Complete;
}

void check_against_oracle(const Eigen::MatrixXd& pts, Metric metric, Linkage linkage) {
  const auto tree = hcluster(pts, metric, linkage);
  const auto ref = oracle::naive_linkage(pts, to_oracle(linkage), metric == Metric::CosineDistance);
  REQUIRE(tree.merges.size() == ref.size());
  for (std::size_t s = 0; s < ref.size(); ++s) {
    CHECK(tree.merges[s].a == ref[s].a);
    CHECK(tree.merges[s].b == ref[s].b);
    CHECK(tree.merges[s].size == ref[s].size);
    CHECK(std::abs(tree.merges[s].height - ref[s].height) <= 1e-9 * std::max(1.0, ref[s].height));
  }
}

// Every cluster of the k+1 cut sits inside one cluster of the k cut.
bool nested(const std::vector<int>& fine, const std::vector<int>& coarse) {
  std::map<int, int> parent;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    auto [it, fresh] = parent.emplace(fine[i], coarse[i]);
    if (!fresh && it->second != coarse[i]) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("clustering") {

TEST_CASE("group medians use the middle-two convention") {
  GroupPanel one{"AA", FacetMatrix::Constant(1, kFacets, 3.0)};
  GroupPanel three{"BB", FacetMatrix::Zero(3, kFacets)};
  three.members.col(0) << 3, 1, 2;
  GroupPanel four{"CC", FacetMatrix::Zero(4, kFacets)};
  four.members.col(0) << 4, 1, 3, 2;
  const std::vector<GroupPanel> panels{one, three, four};
  const auto m = group_medians(panels);
  CHECK(m(0, 5) == 3.0);
  CHECK(m(1, 0) == 2.0);
  CHECK(m(2, 0) == 2.5);
}

TEST_CASE("medians of ten synthetic groups match a full sort") {
  std::vector<GroupPanel> panels;
  for (int g = 0; g < 10; ++g) panels.push_back(oracle::mixed_panel(37 + g, g));
  const auto m = group_medians(panels);
  for (int g = 0; g < 10; ++g) {
    for (int f = 0; f < kFacets; ++f) {
      std::vector<double> col;
      for (Eigen::Index r = 0; r < panels[g].members.rows(); ++r) col.push_back(panels[g].members(r, f));
      CHECK(m(g, f) == oracle::median(col));
    }
  }
}

TEST_CASE("two points merge once at their distance") {
  Eigen::MatrixXd p(2, 2);
  p << 0, 0, 3, 4;
  const auto t = hcluster(p, Metric::Euclidean, Linkage::Average);
  REQUIRE(t.merges.size() == 1);
  CHECK(t.merges[0].height == 5.0);
  CHECK(t.merges[0].size == 2);
}

TEST_CASE("collinear 0, 1, 10 merges the near pair first") {
  Eigen::MatrixXd p(3, 1);
  p << 0, 1, 10;
  for (auto l : {Linkage::Ward, Linkage::Average, Linkage::Complete}) {
    const auto t = hcluster(p, Metric::Euclidean, l);
    CHECK(t.merges[0].a == 0);
    CHECK(t.merges[0].b == 1);
    CHECK(t.merges[1].a == 2);
    CHECK(t.merges[1].b == 3);
  }
}

TEST_CASE("ties break on the smallest member indices") {
  Eigen::MatrixXd p(4, 1);
  p << 0, 1, 5, 6;
  const auto t = hcluster(p, Metric::Euclidean, Linkage::Complete);
  CHECK(t.merges[0].a == 0);
  CHECK(t.merges[0].b == 1);
  CHECK(t.merges[1].a == 2);
  CHECK(t.merges[1].b == 3);
}

TEST_CASE("ten random points match the naive oracle for every linkage") {
  for (auto l : {Linkage::Ward, Linkage::Average, Linkage::Complete}) {
    for (std::uint64_t s = 0; s < 5; ++s) check_against_oracle(random_points(10, 4, s), Metric::Euclidean, l);
  }
}

TEST_CASE("cosine distance matches the naive oracle for average and complete") {
  for (auto l : {Linkage::Average, Linkage::Complete}) {
    for (std::uint64_t s = 0; s < 5; ++s) check_against_oracle(random_points(15, 6, 100 + s), Metric::CosineDistance, l);
  }
}

TEST_CASE("ward with cosine distance is refused") {
  try {
    hcluster(random_points(5, 3, 1), Metric::CosineDistance, Linkage::Ward);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MetricLinkageMismatch);
  }
}

TEST_CASE("heights never decrease and the last merge holds every leaf") {
  for (auto l : {Linkage::Ward, Linkage::Average, Linkage::Complete}) {
    const auto t = hcluster(random_points(200, 5, 3), Metric::Euclidean, l);
    for (std::size_t s = 1; s < t.merges.size(); ++s) CHECK(t.merges[s].height >= t.merges[s - 1].height);
    CHECK(t.merges.back().size == 200);
  }
}

TEST_CASE("cuts nest for every k and cover exactly k labels") {
  const auto pts = random_points(40, 3, 9);
  const auto t = hcluster(pts);
  std::vector<int> prev = cut_labels(t, 1);
  for (int k = 2; k <= 40; ++k) {
    const auto cur = cut_labels(t, k);
    CHECK(std::set<int>(cur.begin(), cur.end()).size() == static_cast<std::size_t>(k));
    CHECK(*std::max_element(cur.begin(), cur.end()) == k - 1);
    CHECK(nested(cur, prev));
    prev = cur;
  }
}

TEST_CASE("degenerate cuts are flagged") {
  const auto pts = random_points(12, 2, 4);
  const auto t = hcluster(pts);
  const auto all = cut_tree(t, 12, pts);
  CHECK_FALSE(all.silhouette_defined);
  CHECK(all.silhouette_mean == 0.0);
  const auto one = cut_tree(t, 1, pts);
  CHECK_FALSE(one.silhouette_defined);
}

TEST_CASE("two separated blobs score above 0.8") {
  const auto b = oracle::planted_blobs(2, 50, 2, 10.0, 5);
  const auto a = cut_tree(hcluster(b.points), 2, b.points);
  CHECK(a.silhouette_defined);
  CHECK(a.silhouette_mean > 0.8);
}

TEST_CASE("silhouette matches the definition") {
  const auto pts = random_points(30, 3, 6);
  const auto t = hcluster(pts, Metric::Euclidean, Linkage::Average);
  for (int k = 2; k < 30; ++k) {
    const auto a = cut_tree(t, k, pts);
    CHECK(std::abs(a.silhouette_mean - oracle::silhouette(pts, a.labels)) < 1e-12);
    CHECK(a.silhouette_mean >= -1.0);
    CHECK(a.silhouette_mean <= 1.0);
  }
}

TEST_CASE("select_k finds three planted blobs among 2, 3, 4") {
  const auto b = oracle::planted_blobs(3, 30, 2, 8.0, 12);
  const std::vector<int> cand{2, 3, 4};
  const auto sel = select_k(hcluster(b.points), cand, b.points);
  CHECK(sel.k == 3);
  CHECK(sel.table.size() == 3);
}

TEST_CASE("a single candidate is chosen trivially") {
  const auto pts = random_points(20, 2, 1);
  const std::vector<int> cand{2};
  CHECK(select_k(hcluster(pts), cand, pts).k == 2);
}

TEST_CASE("identical points have no defined silhouette") {
  const Eigen::MatrixXd pts = Eigen::MatrixXd::Ones(10, 3);
  const std::vector<int> cand{2, 3};
  try {
    select_k(hcluster(pts), cand, pts);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SelectionDegenerate);
  }
}

TEST_CASE("out-of-range candidates are argument errors") {
  const auto pts = random_points(5, 2, 1);
  const std::vector<int> cand{5};
  CHECK_THROWS_AS(select_k(hcluster(pts), cand, pts), Error);
}

TEST_CASE("subsampling sizes, identity and determinism") {
  const auto p = oracle::mixed_panel(1000, 3, "QQ");
  CHECK(subsample_panel(p, 1.0, 1).members == p.members);
  const auto a = subsample_panel(p, 0.1, 42);
  CHECK(a.size() == 100);
  CHECK(a.members == subsample_panel(p, 0.1, 42).members);
  CHECK(a.members != subsample_panel(p, 0.1, 43).members);
  CHECK_THROWS_AS(subsample_panel(p, 0.0, 1), Error);
}

TEST_CASE("metric and linkage names") {
  CHECK(parse_linkage("ward") == Linkage::Ward);
  CHECK(parse_metric("cosine") == Metric::CosineDistance);
  CHECK_THROWS_AS(parse_linkage("single"), Error);
}

}  // TEST_SUITE
