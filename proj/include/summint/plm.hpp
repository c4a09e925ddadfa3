#pragma once

#include <cstdint>
#include <vector>

#include "summint/folds.hpp"
#include "summint/optim.hpp"
#include "summint/types.hpp"

namespace summint::plm {

// Partially linear extension of the labeled-only regression: a lasso over
// the summarized covariates x plus an additive cubic B-spline smooth over
// a few fully observed covariates z. Needs individualized z for every
// unit, external ones included.

struct PlmDataset {
  PrimaryDataset base;
  Eigen::MatrixXd z_labeled;   // n_labeled x r
  Eigen::MatrixXd z_external;  // n_external x r

  void validate() const;
};

// Additive basis: per z coordinate a clamped cubic B-spline with interior
// knots at empirical quantiles of the fitting sample. A coordinate whose
// fitting values are constant contributes no columns (the x intercept
// absorbs any constant shift).
struct SplineBasis {
  std::vector<Eigen::VectorXd> knots;  // padded knot sequences, one per coordinate
  std::vector<int> offsets;            // column offset per coordinate
  std::vector<int> ncoefs;             // columns per coordinate (0 when constant)
  int total = 0;

  static SplineBasis build(const Eigen::MatrixXd& z, int interior_knots = 10);

  // Row of basis values for one z point, coordinates clamped to the
  // fitting range.
  Eigen::RowVectorXd eval_row(const Eigen::VectorXd& z) const;
  Eigen::MatrixXd eval(const Eigen::MatrixXd& z) const;
};

struct PlmFunction {
  SplineBasis basis;
  Eigen::VectorXd coef;

  double eval(const Eigen::VectorXd& z) const { return basis.eval_row(z).dot(coef); }
};

struct PlmFitResult {
  Eigen::VectorXd beta;
  PlmFunction f;
  double lambda = 0.0;
  double eta = 0.0;
  double objective = 0.0;
  int alternations = 0;
  bool converged = false;
};

// Alternates a lasso in beta (spline part fixed) with a ridge-penalized
// least squares in the spline coefficients (beta fixed) until the relative
// objective decrease falls below alt_tol. Throws on fewer than 20 rows or
// more than 5 z columns.
PlmFitResult fit_plm(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                     const Eigen::VectorXd& y, double lambda, double eta,
                     double alt_tol = 1e-8, int max_alt = 200,
                     const optim::SolveOptions& solve = {},
                     bool penalize_intercept = false,
                     const Eigen::VectorXd* warm_beta = nullptr);

struct Options {
  int K = 5;
  double level = 0.95;
  int lambda_points = 5;
  double lambda_ratio = 1e-3;
  int eta_points = 5;
  int cv_folds = 5;
  double alt_tol = 1e-8;
  int max_alt = 200;
  optim::SolveOptions solve;
  bool penalize_intercept = false;
  bool require_ci = false;
  std::uint64_t seed = 0;
};

struct PlmFit {
  FoldPlan plan;
  std::vector<PlmFitResult> fold_fits;
  std::vector<double> gamma_hats;
  EstimateReport report;
};

// Point and variance from given per-fold fits; estimate_mean_plm is this
// applied to cross-validated fits. With every spline part identically
// zero and matching per-fold lasso coefficients, the point reproduces the
// summary-imputed linear estimate bit for bit.
EstimateReport aggregate_plm(const PlmDataset& data, const ExternalSummary& summary,
                             const FoldPlan& plan,
                             const std::vector<PlmFitResult>& fits, const Options& opts);

// Cross-fitted mean estimate: per complement a joint (lambda, eta) grid
// search by CV, then fold-wise aggregation with inverse-fraction residual
// correction.
PlmFit estimate_mean_plm(const PlmDataset& data, const ExternalSummary& summary,
                         const Options& opts);

}  // namespace summint::plm
