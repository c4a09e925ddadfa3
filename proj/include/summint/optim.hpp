#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace summint::optim {

// Two l1-penalized problem shapes cover every nuisance fit in the library:
// a weighted quadratic (outcome regressions) and an exponential-tilt loss
// (propensity fits). Both divide their smooth part by an explicit
// normalizer, which need not equal the weight mass or the row count --
// several estimators normalize by a larger sample than the rows present.

struct QuadProblem {
  Eigen::MatrixXd x;        // design rows, column 0 == 1
  Eigen::VectorXd y;
  Eigen::VectorXd weights;  // nonnegative, one per row
  double normalizer = 0.0;  // N in (1/N) sum_i w_i (y_i - x_i'b)^2
  double lambda = 0.0;
  bool penalize_intercept = false;
};

// L(a) = v'a + (1/M) sum_i exp(-x_i'a) + lambda * |a_pen|_1
struct TiltProblem {
  Eigen::VectorXd linear;   // v
  Eigen::MatrixXd exp_rows; // rows entering the exponential sum
  double normalizer = 0.0;  // M
  double lambda = 0.0;
  bool penalize_intercept = false;
};

struct SolveOptions {
  double tol = 1e-8;        // KKT residual target
  int max_iter = 10000;     // coordinate sweeps (quad)
  int max_prox_iter = 5000; // accepted proximal steps (tilt)
  double exp_clamp = 700.0; // exponent clamp, evaluation only
  double iterate_bound = 1e6;  // divergence guard for the tilt iterates
  bool record_trace = true;
};

struct PenalizedFit {
  Eigen::VectorXd beta;
  double lambda = 0.0;
  std::vector<int> support;  // indices with beta != 0, ascending
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool clamped = false;  // tilt: exponent clamp was active at some evaluation
  std::vector<double> objective_trace;
};

double quad_objective(const QuadProblem& p, const Eigen::VectorXd& beta);
double tilt_objective(const TiltProblem& p, const Eigen::VectorXd& alpha);

// Cyclic coordinate descent with soft thresholding, active-set sweeps, and
// exact-zero support. Throws on a degenerate column (zero weighted second
// moment but a gradient the coordinate cannot reduce).
PenalizedFit solve_lasso(const QuadProblem& p, const SolveOptions& opts = {},
                         const Eigen::VectorXd* warm = nullptr);

// Proximal gradient with backtracking line search on the smooth part.
// Throws when exp_rows is empty or the iterates run away (unbounded loss,
// e.g. separation with lambda = 0). The final KKT residual is evaluated
// without the exponent clamp.
PenalizedFit solve_tilt(const TiltProblem& p, const SolveOptions& opts = {},
                        const Eigen::VectorXd* warm = nullptr);

// Smallest lambda that zeroes every penalized coordinate, computed from
// the gradient at the unpenalized-coordinates-only solution.
double lambda_max(const QuadProblem& p);
double lambda_max(const TiltProblem& p);

// Log-spaced descending grid from lam_max down to ratio * lam_max.
std::vector<double> default_grid(double lam_max, int points = 30,
                                 double ratio = 1e-3);

struct CvResult {
  double lambda = 0.0;
  std::vector<double> grid;       // descending
  std::vector<double> mean_loss;  // held-out loss per grid point
  int usable_folds = 0;
};

// K-fold CV over rows with warm starts along the grid; ties and
// near-ties resolve toward the larger lambda (first strict improvement
// wins). Folds whose fits fail are dropped; all folds failing is an error.
CvResult cross_validate(const QuadProblem& p, int K_cv,
                        const std::vector<double>& grid, std::uint64_t seed,
                        const SolveOptions& opts = {});
CvResult cross_validate(const TiltProblem& p, int K_cv,
                        const std::vector<double>& grid, std::uint64_t seed,
                        const SolveOptions& opts = {});

// How estimators pick the penalty level.
struct LambdaRule {
  enum class Kind { cv, fixed, theory };
  Kind kind = Kind::cv;
  double value = 0.0;  // fixed lambda, or the constant c for theory
  int grid_points = 30;
  double grid_ratio = 1e-3;
  int cv_folds = 5;

  static LambdaRule cv() { return {}; }
  static LambdaRule fixed(double lam) { return {Kind::fixed, lam, 30, 1e-3, 5}; }
  static LambdaRule theory(double c) { return {Kind::theory, c, 30, 1e-3, 5}; }
};

// Resolve a rule to a concrete lambda for one problem. theory_lambda is
// the caller-computed c * sqrt(log d / (n gamma_hat)) value (the rule's
// constant is applied by the caller, which knows n and gamma_hat).
double choose_lambda(const QuadProblem& p, const LambdaRule& rule,
                     std::uint64_t seed, const SolveOptions& opts,
                     double theory_lambda = 0.0);
double choose_lambda(const TiltProblem& p, const LambdaRule& rule,
                     std::uint64_t seed, const SolveOptions& opts,
                     double theory_lambda = 0.0);

}  // namespace summint::optim
