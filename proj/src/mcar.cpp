#include "summint/mcar.hpp"

#include <cmath>
#include <stdexcept>

#include "summint/rng.hpp"

namespace summint::mcar {

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

}  // namespace

double theory_lambda(double c, std::int64_t n, double gamma, Eigen::Index d) {
  if (!(gamma > 0.0)) throw std::invalid_argument("theory lambda: zero labeled fraction");
  return c * std::sqrt(std::log(static_cast<double>(d)) / (static_cast<double>(n) * gamma));
}

McarFit estimate_mean_mcar(const PrimaryDataset& data, const ExternalSummary& summary,
                           const Options& opts) {
  data.validate();
  summary.validate();
  if (summary.mean.size() != data.d())
    throw std::invalid_argument("mcar: summary dimension does not match the data");
  if (summary.n_external != data.n_external)
    throw std::invalid_argument("mcar: external counts disagree between data and summary");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    throw std::invalid_argument("mcar: level must lie in (0,1)");

  McarFit fit;
  fit.plan = make_folds(data.n_labeled(), data.n_external, opts.K, opts.seed,
                        /*split_halves=*/false);
  const int K = fit.plan.K;
  const double gamma_all =
      static_cast<double>(data.n_labeled()) / static_cast<double>(data.n());

  for (int k = 0; k < K; ++k) {
    const auto& comp = fit.plan.complements[static_cast<std::size_t>(k)];
    optim::QuadProblem prob;
    prob.x = gather_rows(data.x, comp.labeled);
    prob.y = gather(data.y, comp.labeled);
    prob.weights = Eigen::VectorXd::Ones(prob.x.rows());
    prob.normalizer = static_cast<double>(comp.labeled.size());
    prob.penalize_intercept = opts.penalize_intercept;

    double th = 0.0;
    if (opts.lambda.kind == optim::LambdaRule::Kind::theory)
      th = theory_lambda(opts.lambda.value, data.n(), gamma_all, data.d());
    prob.lambda = optim::choose_lambda(
        prob, opts.lambda, derive_seed(opts.seed, 0x1a55u, static_cast<std::uint64_t>(k)),
        opts.solve, th);
    fit.fold_fits.push_back(optim::solve_lasso(prob, opts.solve));
    fit.gamma_hats.push_back(fit.plan.gamma_hat(k));
  }

  const double n = static_cast<double>(data.n());
  double acc = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& fold = fit.plan.folds[static_cast<std::size_t>(k)];
    const Eigen::VectorXd& beta = fit.fold_fits[static_cast<std::size_t>(k)].beta;
    const double inv_g = 1.0 / fit.gamma_hats[static_cast<std::size_t>(k)];
    Eigen::VectorXd pred(static_cast<Eigen::Index>(fold.labeled.size()));
    Eigen::VectorXd yk(static_cast<Eigen::Index>(fold.labeled.size()));
    for (std::size_t i = 0; i < fold.labeled.size(); ++i) {
      const int row = fold.labeled[i];
      pred[static_cast<Eigen::Index>(i)] = data.x.row(row).dot(beta);
      yk[static_cast<Eigen::Index>(i)] = data.y[row];
      acc += pred[static_cast<Eigen::Index>(i)] +
             inv_g * (yk[static_cast<Eigen::Index>(i)] - pred[static_cast<Eigen::Index>(i)]);
    }
    acc += static_cast<double>(fold.external_count()) * summary.mean.dot(beta);
    fit.fold_pred.push_back(std::move(pred));
    fit.fold_y.push_back(std::move(yk));
  }

  EstimateReport& rep = fit.report;
  rep.estimand = Estimand::mean_mcar;
  rep.point = acc / n;
  rep.level = opts.level;
  rep.n = data.n();
  rep.n_labeled = data.n_labeled();
  for (int k = 0; k < K; ++k) {
    const auto& f = fit.fold_fits[static_cast<std::size_t>(k)];
    FitDiagnostics fd;
    fd.fold = k;
    fd.role = "beta";
    fd.lambda = f.lambda;
    fd.support_size = static_cast<int>(f.support.size());
    fd.iterations = f.iterations;
    fd.converged = f.converged;
    rep.diagnostics.fits.push_back(fd);
    if (!f.converged)
      rep.diagnostics.warnings.push_back("fold " + std::to_string(k) +
                                         " regression did not reach tolerance");
  }
  auto [var, src] = variance_mcar(fit, summary);
  attach_interval(rep, var, src);
  return fit;
}

std::pair<double, VarianceSource> variance_mcar(const McarFit& fit,
                                                const ExternalSummary& summary) {
  const double n = static_cast<double>(fit.plan.n());
  const double point = fit.report.point;
  const int K = fit.plan.K;
  double acc = 0.0;
  if (summary.gram) {
    for (int k = 0; k < K; ++k) {
      const auto& fold = fit.plan.folds[static_cast<std::size_t>(k)];
      const Eigen::VectorXd& beta = fit.fold_fits[static_cast<std::size_t>(k)].beta;
      const double inv_g = 1.0 / fit.gamma_hats[static_cast<std::size_t>(k)];
      acc += static_cast<double>(fold.external_count()) * beta.dot(*summary.gram * beta);
      const auto& pred = fit.fold_pred[static_cast<std::size_t>(k)];
      const auto& yk = fit.fold_y[static_cast<std::size_t>(k)];
      for (Eigen::Index i = 0; i < pred.size(); ++i) {
        double infl = pred[i] + inv_g * (yk[i] - pred[i]);
        acc += infl * infl;
      }
    }
    return {acc / n - point * point, VarianceSource::external_gram};
  }
  for (int k = 0; k < K; ++k) {
    const double inv_g = 1.0 / fit.gamma_hats[static_cast<std::size_t>(k)];
    const auto& pred = fit.fold_pred[static_cast<std::size_t>(k)];
    const auto& yk = fit.fold_y[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      double resid = yk[i] - pred[i];
      acc += inv_g * pred[i] * pred[i] + inv_g * inv_g * resid * resid;
    }
  }
  return {acc / n - point * point, VarianceSource::primary_only};
}

std::vector<int> required_support(const McarFit& fit) {
  if (fit.fold_fits.empty()) return {0};
  std::vector<char> used(static_cast<std::size_t>(fit.fold_fits[0].beta.size()), 0);
  used[0] = 1;
  for (const auto& f : fit.fold_fits)
    for (int j : f.support) used[static_cast<std::size_t>(j)] = 1;
  std::vector<int> out;
  for (std::size_t j = 0; j < used.size(); ++j)
    if (used[j]) out.push_back(static_cast<int>(j));
  return out;
}

}  // namespace summint::mcar
