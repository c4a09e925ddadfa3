#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "summint/folds.hpp"
#include "summint/mar.hpp"
#include "summint/optim.hpp"
#include "summint/types.hpp"

namespace summint::causal {

using Options = mar::Options;

// Average treatment effects from labeled-arm outcomes plus external
// covariate summaries. Each arm a is a mean problem under the effective
// labeling indicator "labeled and assigned arm a"; the two arms share one
// fold plan and differ only in which units feed the nuisance fits.

// Covariate mean and size of the complement group for arm a under the
// generalizability weighting: external units plus labeled units of the
// other arm, pooled by count. Throws when the group is empty. The
// intercept coordinate of the returned mean is exactly 1.
std::pair<Eigen::VectorXd, std::int64_t> effective_summary_g(
    int arm, const ExternalSummary& summary, const PrimaryDataset& data);

struct AteFit {
  FoldPlan plan;
  mar::MarNuisance arm1;
  mar::MarNuisance arm0;
  EstimateReport report;
};

// Whole-population ATE: per-arm tilt + weighted lasso with units of the
// opposite arm imputed at the arm's effective mean.
AteFit estimate_ate_generalize(const PrimaryDataset& data,
                               const ExternalSummary& summary, const Options& opts);

// External-population ATE: labeled units of the opposite arm are inert
// (they contribute no loss terms but still count in the normalizers and in
// the fold labeled fractions).
AteFit estimate_ate_transport(const PrimaryDataset& data,
                              const ExternalSummary& summary, const Options& opts);

// Aggregation from given per-fold, per-arm coefficients; the estimators
// above are these applied to freshly fitted nuisances.
EstimateReport tau_g_from_coefs(const PrimaryDataset& data,
                                const ExternalSummary& summary, const FoldPlan& plan,
                                const std::vector<Eigen::VectorXd>& alpha1,
                                const std::vector<Eigen::VectorXd>& beta1,
                                const std::vector<Eigen::VectorXd>& alpha0,
                                const std::vector<Eigen::VectorXd>& beta0,
                                const Options& opts);
EstimateReport tau_t_from_coefs(const PrimaryDataset& data,
                                const ExternalSummary& summary, const FoldPlan& plan,
                                const std::vector<Eigen::VectorXd>& alpha1,
                                const std::vector<Eigen::VectorXd>& beta1,
                                const std::vector<Eigen::VectorXd>& alpha0,
                                const std::vector<Eigen::VectorXd>& beta0,
                                const Options& opts);

}  // namespace summint::causal
