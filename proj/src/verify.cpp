#include "summint/verify.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>

#include "summint/causal.hpp"
#include "summint/mar.hpp"
#include "summint/mcar.hpp"
#include "summint/rng.hpp"

namespace summint::verify {

double quad_smooth_loss(const optim::QuadProblem& p, const Eigen::VectorXd& beta) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
    double fit = 0.0;
    for (Eigen::Index j = 0; j < p.x.cols(); ++j) fit += p.x(i, j) * beta[j];
    const double r = p.y[i] - fit;
    acc += p.weights[i] * r * r;
  }
  return acc / p.normalizer;
}

double tilt_smooth_loss(const optim::TiltProblem& p, const Eigen::VectorXd& alpha) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < alpha.size(); ++j) acc += p.linear[j] * alpha[j];
  double es = 0.0;
  for (Eigen::Index i = 0; i < p.exp_rows.rows(); ++i) {
    double t = 0.0;
    for (Eigen::Index j = 0; j < p.exp_rows.cols(); ++j) t += p.exp_rows(i, j) * alpha[j];
    es += std::exp(-t);
  }
  return acc + es / p.normalizer;
}

Eigen::VectorXd quad_gradient(const optim::QuadProblem& p, const Eigen::VectorXd& beta) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(beta.size());
  for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
    double fit = 0.0;
    for (Eigen::Index j = 0; j < p.x.cols(); ++j) fit += p.x(i, j) * beta[j];
    const double r = p.y[i] - fit;
    for (Eigen::Index j = 0; j < p.x.cols(); ++j)
      g[j] -= 2.0 * p.weights[i] * p.x(i, j) * r;
  }
  return g / p.normalizer;
}

Eigen::VectorXd tilt_gradient(const optim::TiltProblem& p, const Eigen::VectorXd& alpha) {
  Eigen::VectorXd g = p.linear;
  for (Eigen::Index i = 0; i < p.exp_rows.rows(); ++i) {
    double t = 0.0;
    for (Eigen::Index j = 0; j < p.exp_rows.cols(); ++j) t += p.exp_rows(i, j) * alpha[j];
    const double e = std::exp(-t) / p.normalizer;
    for (Eigen::Index j = 0; j < p.exp_rows.cols(); ++j) g[j] -= p.exp_rows(i, j) * e;
  }
  return g;
}

namespace {

double stationarity(const Eigen::VectorXd& grad, const Eigen::VectorXd& coef,
                    double lambda, bool penalize_intercept) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < coef.size(); ++j) {
    const double lam = (j == 0 && !penalize_intercept) ? 0.0 : lambda;
    double v;
    if (lam == 0.0)
      v = std::abs(grad[j]);
    else if (coef[j] != 0.0)
      v = std::abs(grad[j] + lam * (coef[j] > 0.0 ? 1.0 : -1.0));
    else
      v = std::max(std::abs(grad[j]) - lam, 0.0);
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace

double kkt_residual(const optim::PenalizedFit& fit, const optim::QuadProblem& p) {
  return stationarity(quad_gradient(p, fit.beta), fit.beta, p.lambda,
                      p.penalize_intercept);
}

double kkt_residual(const optim::PenalizedFit& fit, const optim::TiltProblem& p) {
  return stationarity(tilt_gradient(p, fit.beta), fit.beta, p.lambda,
                      p.penalize_intercept);
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& loss,
                            const Eigen::VectorXd& at, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: step must be positive");
  Eigen::VectorXd g(at.size());
  Eigen::VectorXd probe = at;
  for (Eigen::Index j = 0; j < at.size(); ++j) {
    probe[j] = at[j] + h;
    const double up = loss(probe);
    probe[j] = at[j] - h;
    const double dn = loss(probe);
    probe[j] = at[j];
    if (!std::isfinite(up) || !std::isfinite(dn))
      throw std::runtime_error("fd_gradient: non-finite loss probing coordinate " +
                               std::to_string(j));
    g[j] = (up - dn) / (2.0 * h);
  }
  return g;
}

namespace {

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool bits_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (!bits_equal(a[i], b[i])) return false;
  return true;
}

bool bits_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (!bits_equal(a(i, j), b(i, j))) return false;
  return true;
}

EstimateReport run_estimator(const PrimaryDataset& data, const ExternalSummary& summary,
                             Estimand which, std::uint64_t seed) {
  const int K = data.n_labeled() >= 40 ? 5 : 2;
  switch (which) {
    case Estimand::mean_mcar: {
      mcar::Options o;
      o.K = K;
      o.lambda = optim::LambdaRule::fixed(0.05);
      o.seed = seed;
      return mcar::estimate_mean_mcar(data, summary, o).report;
    }
    case Estimand::theta_g:
    case Estimand::theta_t: {
      mar::Options o;
      o.K = K;
      o.lambda_alpha = optim::LambdaRule::fixed(0.05);
      o.lambda_beta = optim::LambdaRule::fixed(0.05);
      o.seed = seed;
      return which == Estimand::theta_g ? mar::estimate_theta_g(data, summary, o).report
                                        : mar::estimate_theta_t(data, summary, o).report;
    }
    case Estimand::tau_g:
    case Estimand::tau_t: {
      causal::Options o;
      o.K = K;
      o.lambda_alpha = optim::LambdaRule::fixed(0.05);
      o.lambda_beta = optim::LambdaRule::fixed(0.05);
      o.seed = seed;
      return which == Estimand::tau_g
                 ? causal::estimate_ate_generalize(data, summary, o).report
                 : causal::estimate_ate_transport(data, summary, o).report;
    }
    case Estimand::mean_plm:
      throw std::invalid_argument(
          "shuffle check: the partially linear estimate reads individualized "
          "smooth covariates, not just the summary");
  }
  throw std::logic_error("shuffle check: unknown estimand");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ShuffleCheck shuffle_equivalence(const PrimaryDataset& labeled,
                                 const Eigen::MatrixXd& external_rows, Estimand which,
                                 std::uint64_t seed) {
  if (labeled.n_external != external_rows.rows())
    throw std::invalid_argument(
        "shuffle check: dataset external count does not match the row block");
  if (external_rows.rows() == 0)
    throw std::invalid_argument("shuffle check: no external rows to replace");

  const ExternalSummary base = summarize_external(external_rows, "full");
  const EstimateReport ref = run_estimator(labeled, base, which, seed);

  ShuffleCheck out;
  out.pass = true;
  Rng rng(derive_seed(seed, 0x5f1eu));

  const Eigen::Index m = external_rows.rows();
  const Eigen::Index d = external_rows.cols();

  struct Scheme {
    std::string name;
    Eigen::MatrixXd rows;
    bool second_moment_matched = false;
  };
  std::vector<Scheme> schemes;

  {
    std::vector<int> order(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    Eigen::MatrixXd rows(m, d);
    for (Eigen::Index i = 0; i < m; ++i) rows.row(i) = external_rows.row(order[static_cast<std::size_t>(i)]);
    schemes.push_back({"permutation", std::move(rows), true});
  }
  if (m % 2 == 0) {
    // keep a random half, pair each kept row with its mean reflection:
    // count and mean survive, the second moment generally does not
    std::vector<int> order(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    Eigen::MatrixXd rows(m, d);
    for (Eigen::Index i = 0; i < m / 2; ++i) {
      const Eigen::RowVectorXd kept = external_rows.row(order[static_cast<std::size_t>(i)]);
      rows.row(2 * i) = kept;
      rows.row(2 * i + 1) = 2.0 * base.mean.transpose() - kept;
    }
    schemes.push_back({"half reflection pairing", std::move(rows), false});
  } else {
    out.detail.push_back("half reflection pairing: skipped (odd external count)");
  }
  {
    // reflect every row about the mean: an affine replacement matching
    // count, mean, and second moment
    Eigen::MatrixXd rows(m, d);
    for (Eigen::Index i = 0; i < m; ++i)
      rows.row(i) = 2.0 * base.mean.transpose() - external_rows.row(i);
    schemes.push_back({"full mean reflection", std::move(rows), true});
  }

  for (const Scheme& sc : schemes) {
    const ExternalSummary alt = summarize_external(sc.rows, "full");
    std::string line = sc.name + ":";
    bool ok = true;
    if (alt.n_external != base.n_external) {
      ok = false;
      line += " count changed";
    }
    if (!bits_equal(alt.mean, base.mean)) {
      ok = false;
      line += " mean not reproduced bit for bit";
    }
    if (sc.second_moment_matched && !bits_equal(*alt.gram, *base.gram)) {
      ok = false;
      line += " second moment not reproduced bit for bit";
    }
    if (ok) {
      const EstimateReport rep = run_estimator(labeled, alt, which, seed);
      if (!bits_equal(rep.point, ref.point)) {
        ok = false;
        line += " point mismatch (" + fmt(ref.point) + " vs " + fmt(rep.point) + ")";
      }
      if (sc.second_moment_matched && rep.variance.has_value() != ref.variance.has_value()) {
        ok = false;
        line += " variance availability mismatch";
      }
      if (sc.second_moment_matched && rep.variance && ref.variance &&
          !bits_equal(*rep.variance, *ref.variance)) {
        ok = false;
        line += " variance mismatch (" + fmt(*ref.variance) + " vs " + fmt(*rep.variance) + ")";
      }
    }
    if (ok) line += " ok";
    out.detail.push_back(line);
    out.pass = out.pass && ok;
  }
  return out;
}

}  // namespace summint::verify
