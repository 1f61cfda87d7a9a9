#include "gpdi/regression.hpp"

#include "gpdi/parallel.hpp"
#include "gpdi/stats.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace gpdi {
namespace {

constexpr double kRankThreshold = 1e-10;

struct LeastSquares {
  Eigen::VectorXd beta;
  Eigen::MatrixXd unscaled_cov;  // (X'X)^-1
  Eigen::VectorXd fitted;
};

// X already carries the intercept column.
LeastSquares solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(kRankThreshold);
  if (qr.rank() < x.cols()) {
    throw Error(ErrorCode::RankDeficient,
                fmt::format("design of {} columns has rank {}", x.cols(), qr.rank()));
  }
  LeastSquares out;
  out.beta = qr.solve(y);
  const Eigen::Index k = x.cols();
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd perm_cov = r_inv * r_inv.transpose();
  const auto& perm = qr.colsPermutation();
  out.unscaled_cov = perm * perm_cov * perm.transpose();
  out.fitted = x * out.beta;
  return out;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& predictors) {
  Eigen::MatrixXd x(predictors.rows(), predictors.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(predictors.cols()) = predictors;
  return x;
}

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& fitted) {
  const double sst = (y.array() - y.mean()).square().sum();
  if (!(sst > 0)) throw Error(ErrorCode::DegenerateVariance, "response has zero variance");
  const double ssr = (y - fitted).squaredNorm();
  return 1.0 - ssr / sst;
}

std::vector<Eigen::Index> complete_rows(const CovariateTable& table, const std::vector<Eigen::Index>& cols) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    bool ok = true;
    for (auto c : cols) ok = ok && std::isfinite(table.values(r, c));
    if (ok) rows.push_back(r);
  }
  return rows;
}

Eigen::Index require_column(const CovariateTable& table, const std::string& name) {
  auto c = table.column_index(name);
  if (!c) throw Error(ErrorCode::InvalidArgument, fmt::format("no column named '{}'", name));
  return *c;
}

RegressionReport fit_rows(const CovariateTable& table, const DesignSpec& spec,
                          const std::vector<Eigen::Index>& rows) {
  const Eigen::Index y_col = require_column(table, spec.response);
  std::vector<std::string> names = spec.predictors;
  std::vector<Eigen::Index> base;
  for (const auto& p : spec.predictors) base.push_back(require_column(table, p));

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(spec.predictors.size() + spec.squared.size());
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    y(r) = table.values(rows[static_cast<std::size_t>(r)], y_col);
    for (std::size_t c = 0; c < base.size(); ++c) x(r, static_cast<Eigen::Index>(c)) = table.values(rows[r], base[c]);
  }
  for (std::size_t s = 0; s < spec.squared.size(); ++s) {
    const Eigen::Index src = require_column(table, spec.squared[s]);
    names.push_back(spec.squared[s] + "^2");
    for (Eigen::Index r = 0; r < n; ++r) {
      const double v = table.values(rows[r], src);
      x(r, static_cast<Eigen::Index>(base.size() + s)) = v * v;
    }
  }

  std::optional<Standardization> record;
  if (spec.standardize) {
    if (n < 2) throw Error(ErrorCode::InsufficientRows, "too few rows to standardize");
    auto st = standardize(x);
    x = std::move(st.columns);
    record = std::move(st.record);
  }
  RegressionReport rep = ols(x, y, names);
  rep.standardization = std::move(record);
  for (auto r : rows) rep.groups.push_back(table.groups[static_cast<std::size_t>(r)]);
  return rep;
}

}  // namespace

void DesignSpec::validate() const {
  if (predictors.empty()) throw Error(ErrorCode::InvalidArgument, "a design needs at least one predictor");
  std::set<std::string> seen;
  for (const auto& p : predictors) {
    if (!seen.insert(p).second) throw Error(ErrorCode::InvalidArgument, fmt::format("duplicate predictor '{}'", p));
    if (p == response) throw Error(ErrorCode::InvalidArgument, fmt::format("response '{}' is also a predictor", p));
  }
  for (const auto& s : squared) {
    if (!seen.count(s)) throw Error(ErrorCode::InvalidArgument, fmt::format("squared term '{}' is not a predictor", s));
  }
}

RegressionReport ols(const Eigen::MatrixXd& predictors, const Eigen::VectorXd& response,
                     std::span<const std::string> names) {
  const auto n = static_cast<std::size_t>(predictors.rows());
  const auto p = static_cast<std::size_t>(predictors.cols());
  if (response.size() != predictors.rows()) throw Error(ErrorCode::InvalidArgument, "row count mismatch");
  if (n < p + 2) {
    throw Error(ErrorCode::InsufficientRows, fmt::format("{} rows for {} predictors; need at least {}", n, p, p + 2));
  }
  const Eigen::MatrixXd x = with_intercept(predictors);
  const LeastSquares ls = solve(x, response);

  RegressionReport rep;
  rep.n = n;
  rep.p = p;
  rep.fitted = ls.fitted;
  rep.residuals = response - ls.fitted;
  rep.r2 = r_squared(response, ls.fitted);
  const double dof = static_cast<double>(n - p - 1);
  rep.adj_r2 = 1.0 - (1.0 - rep.r2) * static_cast<double>(n - 1) / dof;
  rep.residual_variance = rep.residuals.squaredNorm() / dof;

  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Coefficient coef;
    coef.name = c == 0 ? "(intercept)"
                       : (static_cast<std::size_t>(c) <= names.size() ? names[static_cast<std::size_t>(c - 1)]
                                                                       : fmt::format("x{}", c));
    coef.estimate = ls.beta(c);
    coef.std_error = std::sqrt(std::max(0.0, rep.residual_variance * ls.unscaled_cov(c, c)));
    coef.t = coef.std_error > 0 ? coef.estimate / coef.std_error
                                : (coef.estimate == 0 ? 0.0 : std::copysign(INFINITY, coef.estimate));
    coef.p_value = t_two_sided_p(coef.t, dof);
    rep.coefficients.push_back(std::move(coef));
  }

  if (rep.r2 >= 1.0) {
    rep.f_statistic = INFINITY;
    rep.f_p_value = 0.0;
  } else {
    rep.f_statistic = (rep.r2 / static_cast<double>(p)) / ((1.0 - rep.r2) / dof);
    const boost::math::fisher_f dist(static_cast<double>(p), dof);
    rep.f_p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, std::max(0.0, rep.f_statistic))), 0.0, 1.0);
  }
  rep.vif = p >= 2 ? vif(predictors) : std::vector<double>(p, 1.0);
  return rep;
}

RegressionReport ols_fit(const CovariateTable& table, const DesignSpec& spec) {
  spec.validate();
  std::vector<Eigen::Index> cols{require_column(table, spec.response)};
  for (const auto& p : spec.predictors) cols.push_back(require_column(table, p));
  return fit_rows(table, spec, complete_rows(table, cols));
}

std::vector<double> vif(const Eigen::MatrixXd& predictors) {
  const Eigen::Index p = predictors.cols();
  if (p < 2) throw Error(ErrorCode::InvalidArgument, "VIF needs at least two predictors");
  std::vector<double> out(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) {
    Eigen::MatrixXd others(predictors.rows(), p - 1);
    others << predictors.leftCols(i), predictors.rightCols(p - i - 1);
    double r2;
    try {
      const LeastSquares ls = solve(with_intercept(others), predictors.col(i));
      r2 = r_squared(predictors.col(i), ls.fitted);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::RankDeficient) {
        throw Error(ErrorCode::PerfectCollinearity, fmt::format("predictors other than {} are collinear", i));
      }
      throw;
    }
    if (r2 > 1.0 - 1e-12) {
      throw Error(ErrorCode::PerfectCollinearity, fmt::format("predictor {} is a linear combination of the others", i));
    }
    out[static_cast<std::size_t>(i)] = 1.0 / (1.0 - r2);
  }
  return out;
}

std::vector<double> vif(const CovariateTable& table, std::span<const std::string> predictors) {
  std::vector<Eigen::Index> cols;
  for (const auto& p : predictors) cols.push_back(require_column(table, p));
  const auto rows = complete_rows(table, cols);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = table.values(rows[r], cols[c]);
  }
  return vif(x);
}

std::string stars(double p_value) {
  if (p_value < 0.001) return "***";
  if (p_value < 0.01) return "**";
  if (p_value < 0.05) return "*";
  return "";
}

ModelLadder model_ladder(const CovariateTable& table, const std::string& response,
                         std::span<const std::vector<std::string>> factor_sets, bool standardize,
                         const std::map<std::string, std::string>& labels) {
  ModelLadder ladder;
  ladder.response = response;
  std::vector<Eigen::Index> cols{require_column(table, response)};
  std::set<std::string> uni;
  for (const auto& set : factor_sets) {
    for (const auto& name : set) {
      if (uni.insert(name).second) cols.push_back(require_column(table, name));
    }
  }
  const auto rows = complete_rows(table, cols);
  ladder.n_complete = rows.size();

  const auto label_of = [&](const std::string& name) {
    auto it = labels.find(name);
    return it == labels.end() ? name : it->second;
  };

  ladder.rows.resize(factor_sets.size());
  parallel_for(factor_sets.size(), [&](std::size_t m, unsigned) {
    LadderRow& row = ladder.rows[m];
    row.predictors = factor_sets[m];
    row.label = label_of(response) + " ~ ";
    for (std::size_t i = 0; i < row.predictors.size(); ++i) {
      row.label += (i ? " + " : "") + label_of(row.predictors[i]);
    }
    row.n = rows.size();
    try {
      DesignSpec spec{response, row.predictors, standardize, {}};
      spec.validate();
      RegressionReport rep = fit_rows(table, spec, rows);
      row.r2 = rep.r2;
      row.adj_r2 = rep.adj_r2;
      row.f_p_value = rep.f_p_value;
      row.stars = stars(rep.f_p_value);
      row.report = std::move(rep);
    } catch (const Error& e) {
      row.error = e.what();
    }
  });

  for (std::size_t m = 0; m < ladder.rows.size(); ++m) {
    auto& row = ladder.rows[m];
    const std::set<std::string> mine(row.predictors.begin(), row.predictors.end());
    std::size_t best_size = 0;
    for (std::size_t e = 0; e < m; ++e) {
      const auto& other = ladder.rows[e];
      if (other.error || other.predictors.size() >= mine.size() || other.predictors.size() <= best_size) continue;
      const bool nested = std::all_of(other.predictors.begin(), other.predictors.end(),
                                      [&](const std::string& s) { return mine.count(s) > 0; });
      if (nested) {
        row.nested_in = e;
        best_size = other.predictors.size();
      }
    }
    if (row.nested_in && !row.error) row.adj_r2_delta = row.adj_r2 - ladder.rows[*row.nested_in].adj_r2;
  }
  return ladder;
}

std::vector<std::vector<std::string>> three_factor_sets(const std::string& a, const std::string& b,
                                                        const std::string& c) {
  return {{a}, {b}, {c}, {a, b}, {a, c}, {b, c}, {a, b, c}};
}

PolyFit poly_fit(std::span<const double> x, std::span<const double> y, int degree) {
  if (degree != 1 && degree != 2) throw Error(ErrorCode::InvalidArgument, "degree must be 1 or 2");
  if (x.size() != y.size()) throw Error(ErrorCode::InvalidArgument, "x and y lengths differ");
  const std::size_t n = x.size();
  if (n < static_cast<std::size_t>(degree) + 2) {
    throw Error(ErrorCode::InsufficientRows, fmt::format("{} points for a degree-{} fit", n, degree));
  }
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), degree + 1);
  Eigen::VectorXd yy(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    design(r, 0) = 1.0;
    design(r, 1) = x[i];
    if (degree == 2) design(r, 2) = x[i] * x[i];
    yy(r) = y[i];
  }
  const LeastSquares ls = solve(design, yy);
  PolyFit out;
  out.degree = degree;
  out.n = n;
  out.coefficients = ls.beta;
  out.r2 = r_squared(yy, ls.fitted);
  out.adj_r2 = 1.0 - (1.0 - out.r2) * static_cast<double>(n - 1) / static_cast<double>(n - degree - 1);
  if (degree == 2 && out.coefficients(2) != 0.0) {
    const double vx = -out.coefficients(1) / (2.0 * out.coefficients(2));
    out.vertex_x = vx;
    out.vertex_y = out.coefficients(0) + out.coefficients(1) * vx + out.coefficients(2) * vx * vx;
  }
  return out;
}

}  // namespace gpdi
