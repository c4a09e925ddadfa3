#include <cmath>
#include <vector>

#include "doctest.h"
#include "summint/mcar.hpp"
#include "summint/plm.hpp"
#include "summint/rng.hpp"
#include "support/dgps.hpp"

using namespace summint;

namespace {

// Labeled-only design with one smooth covariate.
struct SmoothSample {
  Eigen::MatrixXd x;
  Eigen::MatrixXd z;
  Eigen::VectorXd y;
};

SmoothSample smooth_sample(std::uint64_t seed, int n, int d, int s,
                           double zlo, double zhi,
                           double (*f)(double), double sig_eps) {
  const Eigen::VectorXd beta = dgps::linear_beta(d, s);
  Rng rng(seed);
  SmoothSample out;
  out.x.resize(n, d);
  out.z.resize(n, 1);
  out.y.resize(n);
  for (int i = 0; i < n; ++i) {
    out.x(i, 0) = 1.0;
    for (int j = 1; j < d; ++j) out.x(i, j) = rng.truncated_normal();
    out.z(i, 0) = zlo + (zhi - zlo) * rng.uniform();
    out.y[i] = out.x.row(i).dot(beta) + f(out.z(i, 0)) + sig_eps * rng.normal();
  }
  return out;
}

double sin_f(double z) { return std::sin(z); }

}  // namespace

TEST_CASE("a crushing ridge penalty reduces the fit to a plain lasso") {
  SmoothSample s = smooth_sample(3, 200, 8, 3, 0.0, 1.0, sin_f, 0.5);
  plm::PlmFitResult fit = plm::fit_plm(s.x, s.z, s.y, 0.05, 1e12);
  CHECK(fit.converged);
  optim::QuadProblem p;
  p.x = s.x;
  p.y = s.y;
  p.weights = Eigen::VectorXd::Ones(200);
  p.normalizer = 200.0;
  p.lambda = 0.05;
  optim::PenalizedFit lasso = optim::solve_lasso(p);
  CHECK((fit.beta - lasso.beta).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("a crushing lasso penalty reduces the fit to a spline smooth") {
  SmoothSample s = smooth_sample(4, 150, 6, 2, -2.0, 2.0, sin_f, 0.3);
  const double eta = 0.1;
  plm::PlmFitResult fit = plm::fit_plm(s.x, s.z, s.y, 1e9, eta, 1e-14, 50000);
  for (Eigen::Index j = 1; j < 6; ++j) CHECK(fit.beta[j] == 0.0);

  // Exact joint solve of the surviving problem: intercept plus ridge
  // spline. The intercept is nearly collinear with the basis (a B-spline
  // partition of unity), so only the objective pins both solvers to the
  // same optimum; parameters are compared at the matching looser scale.
  plm::SplineBasis basis = plm::SplineBasis::build(s.z);
  const Eigen::MatrixXd b = basis.eval(s.z);
  const double nn = 150.0;
  const int t = basis.total;
  Eigen::MatrixXd dsg(150, t + 1);
  dsg.col(0).setOnes();
  dsg.rightCols(t) = b;
  Eigen::MatrixXd lhs = dsg.transpose() * dsg / nn;
  lhs.bottomRightCorner(t, t) += eta * Eigen::MatrixXd::Identity(t, t);
  const Eigen::VectorXd phi =
      Eigen::LDLT<Eigen::MatrixXd>(lhs).solve(dsg.transpose() * s.y / nn);
  const double obj_star =
      (s.y - dsg * phi).squaredNorm() / nn + eta * phi.tail(t).squaredNorm();
  CHECK(fit.objective >= obj_star - 1e-10);
  CHECK(fit.objective - obj_star <= 1e-10 * (1.0 + std::abs(obj_star)));
  CHECK(std::abs(fit.beta[0] - phi[0]) <= 1e-6);
  CHECK((fit.f.coef - phi.tail(t)).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("the spline part recovers a sine shape") {
  double total_ise = 0.0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    SmoothSample s = smooth_sample(1000 + r, 1000, 50, 3, -2.0, 2.0, sin_f, 1.0);
    plm::PlmFitResult fit = plm::fit_plm(s.x, s.z, s.y, 0.05, 0.001);
    const int grid = 401;
    double fhat_mean = 0.0, ftrue_mean = 0.0;
    std::vector<double> fhat(grid), ftrue(grid);
    for (int gix = 0; gix < grid; ++gix) {
      const double z = -2.0 + 4.0 * gix / (grid - 1.0);
      Eigen::VectorXd zv(1);
      zv << z;
      fhat[gix] = fit.f.eval(zv);
      ftrue[gix] = std::sin(z);
      fhat_mean += fhat[gix] / grid;
      ftrue_mean += ftrue[gix] / grid;
    }
    double ise = 0.0;
    for (int gix = 0; gix < grid; ++gix) {
      const double diff = (fhat[gix] - fhat_mean) - (ftrue[gix] - ftrue_mean);
      const double wt = (gix == 0 || gix == grid - 1) ? 0.5 : 1.0;
      ise += wt * diff * diff * 4.0 / (grid - 1.0);
    }
    total_ise += ise;
  }
  CHECK(total_ise / reps <= 0.05);
}

TEST_CASE("zero spline parts reproduce the linear estimator bit for bit") {
  dgps::MeanDraw g = dgps::gen_linear_mcar(42, 400, 10, 3, 0.5);
  mcar::Options mopts;
  mopts.seed = 17;
  mopts.lambda = optim::LambdaRule::fixed(0.08);
  mcar::McarFit mfit = estimate_mean_mcar(g.data, g.summary, mopts);

  plm::PlmDataset pd;
  pd.base = g.data;
  pd.z_labeled = Eigen::MatrixXd::Zero(g.data.n_labeled(), 1);
  pd.z_external = Eigen::MatrixXd::Zero(g.data.n_external, 1);

  plm::SplineBasis zero_basis =
      plm::SplineBasis::build(Eigen::MatrixXd::Zero(40, 1));
  REQUIRE(zero_basis.total == 0);
  std::vector<plm::PlmFitResult> fits;
  for (const auto& f : mfit.fold_fits) {
    plm::PlmFitResult pf;
    pf.beta = f.beta;
    pf.f.basis = zero_basis;
    pf.f.coef = Eigen::VectorXd::Zero(0);
    pf.converged = true;
    fits.push_back(pf);
  }
  plm::Options popts;
  popts.seed = mopts.seed;
  EstimateReport rep = plm::aggregate_plm(pd, g.summary, mfit.plan, fits, popts);
  CHECK(rep.point == mfit.report.point);
  CHECK(rep.estimand == Estimand::mean_plm);
}

TEST_CASE("with every unit labeled the smooth estimator returns the sample mean") {
  SmoothSample s = smooth_sample(9, 60, 4, 2, 0.0, 1.0, sin_f, 0.5);
  plm::PlmDataset pd;
  pd.base.x = s.x;
  pd.base.y = s.y;
  pd.base.n_external = 0;
  pd.z_labeled = s.z;
  pd.z_external = Eigen::MatrixXd::Zero(0, 1);
  ExternalSummary sum;
  sum.n_external = 0;
  sum.mean = Eigen::VectorXd::Zero(4);
  sum.mean[0] = 1.0;
  plm::Options opts;
  opts.seed = 23;
  plm::PlmFit fit = plm::estimate_mean_plm(pd, sum, opts);
  const double ybar = s.y.mean();
  CHECK(std::abs(fit.report.point - ybar) <= 1e-12 * std::max(1.0, std::abs(ybar)));
}

TEST_CASE("a shifted smooth covariate triggers a warning, not an error") {
  dgps::PlmDraw g = dgps::gen_plm(77, 240, 6, 2, 0.5);
  g.data.z_external.array() += 5.0;
  plm::Options opts;
  opts.seed = 31;
  plm::PlmFit fit = plm::estimate_mean_plm(g.data, g.summary, opts);
  bool warned = false;
  for (const auto& w : fit.report.diagnostics.warnings)
    warned = warned || w.find("shift") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("smooth covariates are required for every external unit") {
  dgps::PlmDraw g = dgps::gen_plm(78, 200, 6, 2, 0.5);
  g.data.z_external = Eigen::MatrixXd::Zero(0, 1);
  plm::Options opts;
  opts.seed = 1;
  CHECK_THROWS_WITH_AS(plm::estimate_mean_plm(g.data, g.summary, opts),
                       doctest::Contains("z"), std::invalid_argument);
}

TEST_CASE("backfitting input guards") {
  SmoothSample s = smooth_sample(2, 30, 4, 2, 0.0, 1.0, sin_f, 0.5);
  CHECK_THROWS_AS(plm::fit_plm(s.x.topRows(10), s.z.topRows(10), s.y.head(10), 0.1, 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(plm::fit_plm(s.x, s.z, s.y, -0.1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(plm::fit_plm(s.x, Eigen::MatrixXd::Zero(30, 6), s.y, 0.1, 0.1),
                  std::invalid_argument);
}

TEST_CASE("constant smooth coordinates contribute no basis columns") {
  Rng rng(12);
  Eigen::MatrixXd z(30, 2);
  for (int i = 0; i < 30; ++i) {
    z(i, 0) = rng.uniform();
    z(i, 1) = 0.75;
  }
  plm::SplineBasis basis = plm::SplineBasis::build(z);
  REQUIRE(basis.ncoefs.size() == 2);
  CHECK(basis.ncoefs[1] == 0);
  CHECK(basis.ncoefs[0] > 0);
  CHECK(basis.total == basis.ncoefs[0]);
  Eigen::VectorXd far(2);
  far << 25.0, -3.0;  // out of range: evaluation clamps
  Eigen::RowVectorXd row = basis.eval_row(far);
  CHECK(row.size() == basis.total);
  CHECK(row.allFinite());
}
