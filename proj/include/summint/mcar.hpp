#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "summint/folds.hpp"
#include "summint/optim.hpp"
#include "summint/types.hpp"

namespace summint::mcar {

// Population-mean estimation when labeling is independent of everything:
// cross-fitted lasso on the labeled rows, summary-imputed predictions for
// the unlabeled mass, and a fold-wise inverse-fraction residual correction.

struct Options {
  int K = 5;
  double level = 0.95;
  optim::LambdaRule lambda = optim::LambdaRule::cv();
  optim::SolveOptions solve;
  bool penalize_intercept = false;
  std::uint64_t seed = 0;
};

struct McarFit {
  FoldPlan plan;
  std::vector<optim::PenalizedFit> fold_fits;   // regression on each complement
  std::vector<double> gamma_hats;               // fold-local labeled fractions
  std::vector<Eigen::VectorXd> fold_pred;       // x'beta on fold-k labeled rows
  std::vector<Eigen::VectorXd> fold_y;
  EstimateReport report;
};

McarFit estimate_mean_mcar(const PrimaryDataset& data, const ExternalSummary& summary,
                           const Options& opts);

// n-scaled variance: second-moment form when the summary carries a gram
// matrix, otherwise the inverse-fraction form needing labeled rows only.
// Raw (unfloored) value; estimate_mean_mcar floors it into the report.
std::pair<double, VarianceSource> variance_mcar(const McarFit& fit,
                                                const ExternalSummary& summary);

// Union of per-fold supports plus the intercept: the only summary
// coordinates the point estimate reads.
std::vector<int> required_support(const McarFit& fit);

// c * sqrt(log d / (n * gamma)) for the rate-based penalty rule.
double theory_lambda(double c, std::int64_t n, double gamma, Eigen::Index d);

}  // namespace summint::mcar
