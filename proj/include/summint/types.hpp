#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace summint {

// Column 0 of every design row is the constant 1; dimension d counts it.

// Moment summary of the unlabeled pool: count, covariate mean, and
// (optionally) the second-moment matrix E_hat[x x^T] or just its diagonal.
struct ExternalSummary {
  std::int64_t n_external = 0;
  Eigen::VectorXd mean;
  std::optional<Eigen::MatrixXd> gram;
  std::optional<Eigen::VectorXd> gram_diag;

  // Throws std::invalid_argument on dimension mismatch, a non-1 intercept
  // slot, an asymmetric gram, or gram/diag entries inconsistent with each
  // other.
  void validate() const;
};

// Labeled rows only; the unlabeled pool is present solely as a count here
// and as moments in ExternalSummary.
struct PrimaryDataset {
  Eigen::MatrixXd x;  // n_labeled x d, column 0 == 1
  Eigen::VectorXd y;
  std::optional<Eigen::VectorXi> treat;  // 0/1 arm labels, when present
  std::int64_t n_external = 0;

  std::int64_t n_labeled() const { return x.rows(); }
  std::int64_t n() const { return x.rows() + n_external; }
  Eigen::Index d() const { return x.cols(); }

  void validate() const;
};

// Reduce individualized external rows (column 0 == 1) to their summary.
// `moments`: "full" keeps the gram matrix, "diag" only its diagonal,
// "none" neither.
ExternalSummary summarize_external(const Eigen::MatrixXd& rows,
                                   const std::string& moments = "full");

enum class Estimand { mean_mcar, mean_plm, theta_g, theta_t, tau_g, tau_t };

std::string to_string(Estimand e);

// Which second-moment information backed the reported variance.
enum class VarianceSource { external_gram, primary_only, conservative_diag, unavailable };

std::string to_string(VarianceSource s);

struct FitDiagnostics {
  int fold = 0;
  int arm = -1;  // -1 for mean problems
  std::string role;  // "beta", "alpha"
  double lambda = 0.0;
  int support_size = 0;
  int iterations = 0;
  bool converged = false;
  bool clamped = false;
};

struct ReportDiagnostics {
  std::vector<FitDiagnostics> fits;
  VarianceSource variance_source = VarianceSource::unavailable;
  bool variance_floored = false;
  std::optional<double> arm1_point;  // ATE decompositions
  std::optional<double> arm0_point;
  std::vector<std::string> warnings;
};

struct EstimateReport {
  Estimand estimand;
  double point = 0.0;
  std::optional<double> variance;  // n-scaled asymptotic variance estimate
  std::optional<double> se;        // sqrt(variance / n)
  std::optional<std::pair<double, double>> ci;
  double level = 0.95;
  std::int64_t n = 0;
  std::int64_t n_labeled = 0;
  ReportDiagnostics diagnostics;
};

// Fill variance/se/ci from an n-scaled variance estimate, flooring tiny or
// negative values at `floor_at` (recorded in diagnostics).
void attach_interval(EstimateReport& rep, double variance, VarianceSource source,
                     double floor_at = 1e-12);

}  // namespace summint
