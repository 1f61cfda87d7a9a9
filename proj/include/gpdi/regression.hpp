#pragma once

#include "gpdi/error.hpp"
#include "gpdi/ingest.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gpdi {

/// Population-sd standardization record (divide by sqrt(sum d^2 / n)).
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

template <typename Scalar>
struct StandardizedT {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> columns;
  Standardization record;
};

/// Columns to mean 0, population sd 1. Throws DEGENERATE_VARIANCE when a
/// column's sd is below 1e-12.
template <typename Derived>
StandardizedT<typename Derived::Scalar> standardize(const Eigen::MatrixBase<Derived>& columns) {
  using Scalar = typename Derived::Scalar;
  StandardizedT<Scalar> out;
  const auto n = static_cast<Scalar>(columns.rows());
  out.record.mean = columns.colwise().mean().transpose().template cast<double>();
  out.columns = columns.rowwise() - columns.colwise().mean();
  const auto sd = (out.columns.array().square().colwise().sum() / n).sqrt().eval();
  out.record.sd = sd.transpose().template cast<double>();
  for (Eigen::Index c = 0; c < out.columns.cols(); ++c) {
    if (!(sd(c) >= Scalar(1e-12))) {
      throw Error(ErrorCode::DegenerateVariance, "column " + std::to_string(c) + " has zero variance");
    }
    out.columns.col(c) /= sd(c);
  }
  return out;
}

/// Y ~ X1 + ... + Xp, optionally with squared copies of some predictors.
struct DesignSpec {
  std::string response;
  std::vector<std::string> predictors;
  bool standardize = true;
  std::vector<std::string> squared;  // each adds "<name>^2" computed from raw values

  void validate() const;
};

struct Coefficient {
  std::string name;
  double estimate = 0;
  double std_error = 0;
  double t = 0;
  double p_value = 1;
};

struct RegressionReport {
  std::vector<Coefficient> coefficients;  // intercept first
  double r2 = 0;
  double adj_r2 = 0;
  std::size_t n = 0;
  std::size_t p = 0;
  double residual_variance = 0;
  double f_statistic = 0;
  double f_p_value = 1;
  std::vector<double> vif;  // per predictor
  std::optional<Standardization> standardization;
  std::vector<std::string> groups;  // rows used, in table order
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
};

/// OLS on a design without intercept column (one is added). Column-pivoting
/// QR; throws RANK_DEFICIENT or INSUFFICIENT_ROWS (needs n >= p + 2).
RegressionReport ols(const Eigen::MatrixXd& predictors, const Eigen::VectorXd& response,
                     std::span<const std::string> names = {});

/// Complete-case fit of `spec` on the table.
RegressionReport ols_fit(const CovariateTable& table, const DesignSpec& spec);

/// 1 / (1 - R_i^2) from regressing each column on the others. Throws
/// PERFECT_COLLINEARITY when some R_i^2 > 1 - 1e-12.
std::vector<double> vif(const Eigen::MatrixXd& predictors);
std::vector<double> vif(const CovariateTable& table, std::span<const std::string> predictors);

/// "***" below 0.001, "**" below 0.01, "*" below 0.05.
std::string stars(double p_value);

struct LadderRow {
  std::string label;
  std::vector<std::string> predictors;
  std::size_t n = 0;
  double r2 = 0;
  double adj_r2 = 0;
  double f_p_value = 1;
  std::string stars;
  /// Row index of the largest earlier model nested in this one, with the adjusted-R^2 gain over it.
  std::optional<std::size_t> nested_in;
  double adj_r2_delta = 0;
  std::optional<RegressionReport> report;
  std::optional<std::string> error;
};

struct ModelLadder {
  std::string response;
  std::size_t n_complete = 0;
  std::vector<LadderRow> rows;
};

/// Fits every predictor subset on one shared complete-case row set so the
/// adjusted R^2 values compare. Per-model failures are recorded, not thrown.
/// `labels` maps column names to display names for the model strings.
ModelLadder model_ladder(const CovariateTable& table, const std::string& response,
                         std::span<const std::vector<std::string>> factor_sets, bool standardize = true,
                         const std::map<std::string, std::string>& labels = {});

/// The seven single, pairwise and full combinations of three factors, in table order.
std::vector<std::vector<std::string>> three_factor_sets(const std::string& a, const std::string& b,
                                                        const std::string& c);

struct PolyFit {
  int degree = 1;
  Eigen::VectorXd coefficients;  // c0 + c1 x (+ c2 x^2)
  double r2 = 0;
  double adj_r2 = 0;
  std::size_t n = 0;
  std::optional<double> vertex_x;  // degree 2 with nonzero curvature
  std::optional<double> vertex_y;
};

/// Least-squares polynomial of degree 1 or 2. Throws INSUFFICIENT_ROWS below degree + 2 points.
PolyFit poly_fit(std::span<const double> x, std::span<const double> y, int degree);

}  // namespace gpdi
