#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "summint/types.hpp"

namespace summint::sim {

// A Monte Carlo study configuration. `dgp` selects between the linear
// design ("a": sinusoidal treatment assignment, linear outcomes) and the
// quadratic design ("b": logistic-contrast assignment, quadratic outcomes).
struct Scenario {
  std::string dgp = "a";  // "a" or "b"
  Eigen::Index n = 0;     // units per replication (labeled + unlabeled)
  Eigen::Index d = 0;     // covariate dimension including the intercept
  int s_alpha = 0;  // nonzero non-intercept propensity coordinates
  int s_beta = 0;   // nonzero non-intercept outcome coordinates
  double gamma_target = 0.0;  // marginal labeling probability
  int reps = 0;
  std::vector<std::string> estimators;  // estimand tags: tau_g, tau_t
  std::uint64_t seed = 0;

  void validate() const;
};

// Sparse design vectors. Arm 1 and arm 0 mirror each other: the propensity
// vectors flip every non-intercept sign, the outcome vectors flip entirely.
// Layout (0-based): [0] intercept, [1] first covariate with unit weight,
// [2..s-1] a block sharing the remaining mass, zeros elsewhere.
Eigen::VectorXd alpha_star(int arm, Eigen::Index d, int s_alpha, double alpha_n);
Eigen::VectorXd beta_star(int arm, Eigen::Index d, int s_beta);
Eigen::VectorXd v_star(int arm, Eigen::Index d, int s_beta);

// Var(Z | |Z| <= cut) for standard normal Z: 1 - 2 cut phi(cut) / (2 Phi(cut) - 1).
double truncated_normal_variance(double cut = 2.0);

// Per-replication record of the generated truth, kept so estimates can be
// scored without retaining individual unlabeled rows.
struct TruthRecord {
  double mean_diff_all = 0.0;       // average Y(1) - Y(0) over all n units
  double mean_diff_external = 0.0;  // the same average over unlabeled units
  Eigen::Index n_labeled = 0;
  Eigen::Index n_external = 0;
};

struct GenOutput {
  PrimaryDataset data;      // labeled rows with treatment; n_external set
  ExternalSummary summary;  // full-moment reduction of the unlabeled rows
  TruthRecord truth;
};

// Generates one replication. Covariates are an intercept plus iid standard
// normals conditioned on |z| <= 2; potential outcomes share one noise draw
// per unit. Unlabeled rows are reduced to `summary` and discarded before
// returning. `alpha_n` is the calibrated propensity intercept.
GenOutput gen_dgp(const Scenario& sc, double alpha_n, std::int64_t rep_index);

// Core calibration: bisection on [-20, 20] for prob(x) = target, where
// prob is nondecreasing. Accepts x once |prob(x) - target| <=
// max(tol, 3 * se_of_prob(x)); fails with both bracket endpoints in the
// message when the target is not enclosed.
double calibrate_labeling(const std::function<double(double)>& prob,
                          const std::function<double(double)>& se_of_prob,
                          double target, double tol);

// Solves P(Gamma = 1) = gamma_target for the propensity intercept alpha_n
// under the given design. The objective is a 10^6-draw Monte Carlo average
// using common random numbers across bisection evaluations (the Bernoulli
// conditional probability is averaged directly, so the objective is smooth
// and monotone in alpha_n). Results are cached per (dgp, d, s_alpha,
// gamma_target); the cache is thread-safe.
double calibrate_alpha_n(const std::string& dgp, double gamma_target,
                         Eigen::Index d, int s_alpha, double tol = 5e-4);

// Population treatment-effect contrast under the design, by a 10^7-draw
// Monte Carlo average over the covariate law. The shared noise cancels from
// Y(1) - Y(0), so only covariate draws are needed; with transport = true the
// average conditions on being unlabeled via the exact conditional labeling
// probability (a Rao-Blackwellized weight, not Bernoulli draws). Uses a
// fixed internal seed so every caller sees the same oracle value; cached.
double true_tau(const std::string& dgp, bool transport, Eigen::Index d,
                int s_alpha, int s_beta, double alpha_n,
                std::int64_t draws = 10000000);

// One (replication, estimator) outcome in the raw results table.
struct RepRow {
  int rep = 0;
  std::string estimator;
  bool failed = false;
  std::string error;  // set when failed
  double point = 0.0;
  bool has_ci = false;
  double lo = 0.0;
  double hi = 0.0;
};

struct EstimatorMetrics {
  std::string name;
  double tau_true = 0.0;
  std::string tau_provenance;  // "monte_carlo_1e7" or "injected"
  double bias = 0.0;           // median of point - tau_true
  double rmse_med = 0.0;       // median of |point - tau_true|
  double length = 0.0;         // median CI length
  double coverage = 0.0;       // mean of 1{lo <= tau_true <= hi}
  int used = 0;                // replications entering the metrics
  int failures = 0;            // replications excluded after errors
};

struct SimResult {
  Scenario scenario;
  double alpha_n = 0.0;
  double tau_true = 0.0;  // truth for the first requested estimator
  std::string tau_provenance;
  std::vector<EstimatorMetrics> metrics;
  std::vector<RepRow> raw;  // reps x estimators rows, replication-major
  std::string treatment_note;  // which assignment model the dgp used
};

using Estimator = std::function<EstimateReport(
    const PrimaryDataset&, const ExternalSummary&, std::uint64_t seed)>;

// An estimator under test together with the truth it is scored against.
// run_replications supplies these itself for the standard tags; the
// injectable form exists so harnesses can score stub estimators.
struct NamedEstimator {
  std::string name;
  Estimator fn;
  double tau_true = 0.0;
  std::string tau_provenance = "injected";
};

// Runs sc.reps replications of the built-in estimators named by
// sc.estimators (tau_g, tau_t). Replication r uses the counter-derived seed
// (sc.seed, r), so results are independent of `jobs` and of scheduling.
// Replications whose estimator throws are recorded, excluded from the
// metrics, and counted; more than 5% failures for any estimator fails the
// run.
SimResult run_replications(const Scenario& sc, int jobs = 1);

// Same loop with caller-supplied estimators and truths. gen_dgp still drives
// the data; alpha_n is calibrated once up front.
SimResult run_replications(const Scenario& sc,
                           const std::vector<NamedEstimator>& estimators,
                           int jobs = 1);

std::string sim_result_to_json(const SimResult& r);
void save_sim_json(const std::string& path, const SimResult& r);

}  // namespace summint::sim
