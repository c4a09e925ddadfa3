#pragma once

#include <cstdint>
#include <vector>

#include "summint/folds.hpp"
#include "summint/optim.hpp"
#include "summint/types.hpp"

namespace summint::mar {

// Mean estimation when labeling depends on covariates. Each fold's
// complement is split in half: an exponential-tilt propensity fit on the
// alpha half (external units entering only through their mean), then a
// weighted lasso on the beta half with weights exp(-x'alpha_hat). The
// fold's own units never touch either fit.

struct Options {
  int K = 5;
  double level = 0.95;
  optim::LambdaRule lambda_alpha = optim::LambdaRule::cv();
  optim::LambdaRule lambda_beta = optim::LambdaRule::cv();
  optim::SolveOptions solve;
  bool penalize_intercept = false;
  bool require_ci = false;      // error instead of omitting the interval
  double clip_weight = 0.0;     // 0 = off; cap on inverse-propensity factors
  std::uint64_t seed = 0;
};

struct MarNuisance {
  std::vector<optim::PenalizedFit> alpha;  // per fold, fitted first
  std::vector<optim::PenalizedFit> beta;
  std::vector<char> weight_clamped;  // regression weights hit the exponent clamp
};

// Fits alpha strictly before beta on each complement. Throws when a fold's
// alpha half has no labeled unit (the tilt loss is then unbounded).
MarNuisance fit_nuisances(const PrimaryDataset& data, const ExternalSummary& summary,
                          const FoldPlan& plan, const Options& opts);

struct MarFit {
  FoldPlan plan;
  MarNuisance nuisance;
  EstimateReport report;
};

// theta_g: mean over the whole population (labeled + external).
// theta_t: mean over the external population alone.
MarFit estimate_theta_g(const PrimaryDataset& data, const ExternalSummary& summary,
                        const Options& opts);
MarFit estimate_theta_t(const PrimaryDataset& data, const ExternalSummary& summary,
                        const Options& opts);

// Aggregation from given per-fold coefficients: the pieces estimate_theta_*
// are built from, exposed so fixed nuisances can be pushed through the
// moment arithmetic directly.
EstimateReport theta_g_from_coefs(const PrimaryDataset& data,
                                  const ExternalSummary& summary, const FoldPlan& plan,
                                  const std::vector<Eigen::VectorXd>& alphas,
                                  const std::vector<Eigen::VectorXd>& betas,
                                  const Options& opts);
EstimateReport theta_t_from_coefs(const PrimaryDataset& data,
                                  const ExternalSummary& summary, const FoldPlan& plan,
                                  const std::vector<Eigen::VectorXd>& alphas,
                                  const std::vector<Eigen::VectorXd>& betas,
                                  const Options& opts);

// ||b||_0 * b_S' diag(xi) b_S: the conservative stand-in for b' Xi b when
// only marginal second moments are available. Never smaller than the exact
// quadratic for any second-moment matrix with that diagonal.
double conservative_quad(const Eigen::VectorXd& b, const Eigen::VectorXd& gram_diag);

// 1/g(t) for the logistic g, computed as 1 + exp(-t): exact for large |t|
// where e^t/(1+e^t) would round.
double inv_logistic(double t);

}  // namespace summint::mar
