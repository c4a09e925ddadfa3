#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "summint/optim.hpp"
#include "summint/types.hpp"

namespace summint::verify {

// Independent checks: everything here recomputes its quantities from the
// problem definition with plain loops, sharing no code with the solvers.

double quad_smooth_loss(const optim::QuadProblem& p, const Eigen::VectorXd& beta);
double tilt_smooth_loss(const optim::TiltProblem& p, const Eigen::VectorXd& alpha);

Eigen::VectorXd quad_gradient(const optim::QuadProblem& p, const Eigen::VectorXd& beta);
Eigen::VectorXd tilt_gradient(const optim::TiltProblem& p, const Eigen::VectorXd& alpha);

// Largest per-coordinate violation of the subgradient stationarity
// condition at the fit's coefficients, from a from-scratch gradient.
double kkt_residual(const optim::PenalizedFit& fit, const optim::QuadProblem& p);
double kkt_residual(const optim::PenalizedFit& fit, const optim::TiltProblem& p);

// Central finite differences. Throws when any probe evaluates non-finite,
// naming the coordinate.
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& loss,
                            const Eigen::VectorXd& at, double h = 1e-6);

struct ShuffleCheck {
  bool pass = false;
  std::vector<std::string> detail;
};

// Confirms the estimate depends on external rows only through their
// summary: runs the tagged estimator on the true rows' summary and again
// after replacing the rows by moment-matched multisets (a permutation, a
// mean-reflected half pairing, and a full mean reflection), asserting
// bit-identical points -- and bit-identical variances whenever the
// replacement preserves the second moment. Exact replay needs inputs whose
// sums are exact in floating point (dyadic values, as the callers use).
ShuffleCheck shuffle_equivalence(const PrimaryDataset& labeled,
                                 const Eigen::MatrixXd& external_rows, Estimand which,
                                 std::uint64_t seed);

}  // namespace summint::verify
