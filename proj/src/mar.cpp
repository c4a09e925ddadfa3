#include "summint/mar.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "summint/mcar.hpp"
#include "summint/rng.hpp"

namespace summint::mar {

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

void check_inputs(const PrimaryDataset& data, const ExternalSummary& summary,
                  const Options& opts) {
  data.validate();
  summary.validate();
  if (summary.mean.size() != data.d())
    throw std::invalid_argument("mar: summary dimension does not match the data");
  if (summary.n_external != data.n_external)
    throw std::invalid_argument("mar: external counts disagree between data and summary");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    throw std::invalid_argument("mar: level must lie in (0,1)");
  if (opts.clip_weight < 0.0)
    throw std::invalid_argument("mar: negative weight clip");
}

struct QuadPiece {
  double value = 0.0;
  VarianceSource source = VarianceSource::unavailable;
};

QuadPiece quad_with_summary(const Eigen::VectorXd& b, const ExternalSummary& summary) {
  if (summary.gram) return {b.dot(*summary.gram * b), VarianceSource::external_gram};
  if (summary.gram_diag)
    return {conservative_quad(b, *summary.gram_diag), VarianceSource::conservative_diag};
  return {0.0, VarianceSource::unavailable};
}

void finish_without_interval(EstimateReport& rep, const Options& opts) {
  if (opts.require_ci)
    throw std::runtime_error(
        "variance unavailable: the summary carries no second-moment information");
  rep.diagnostics.variance_source = VarianceSource::unavailable;
  rep.diagnostics.warnings.push_back(
      "no second-moment information in the summary; interval omitted");
}

void merge_nuisance_diagnostics(EstimateReport& rep, const MarNuisance& nuis) {
  const int K = static_cast<int>(nuis.alpha.size());
  std::vector<FitDiagnostics> fits;
  for (int k = 0; k < K; ++k) {
    for (const char* role : {"alpha", "beta"}) {
      const optim::PenalizedFit& f =
          role[0] == 'a' ? nuis.alpha[static_cast<std::size_t>(k)]
                         : nuis.beta[static_cast<std::size_t>(k)];
      FitDiagnostics fd;
      fd.fold = k;
      fd.role = role;
      fd.lambda = f.lambda;
      fd.support_size = static_cast<int>(f.support.size());
      fd.iterations = f.iterations;
      fd.converged = f.converged;
      fd.clamped = f.clamped;
      fits.push_back(fd);
      if (!f.converged)
        rep.diagnostics.warnings.push_back("fold " + std::to_string(k) + " " + role +
                                           " fit did not reach tolerance");
    }
    if (nuis.weight_clamped[static_cast<std::size_t>(k)])
      rep.diagnostics.warnings.push_back(
          "fold " + std::to_string(k) +
          " regression weights hit the exponent clamp");
  }
  for (auto& fd : rep.diagnostics.fits) fits.push_back(fd);
  rep.diagnostics.fits = std::move(fits);
}

}  // namespace

double inv_logistic(double t) { return 1.0 + std::exp(-t); }

double conservative_quad(const Eigen::VectorXd& b, const Eigen::VectorXd& gram_diag) {
  if (gram_diag.size() != b.size())
    throw std::invalid_argument("conservative_quad: dimension mismatch");
  double s0 = 0.0;
  double quad = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if (b[j] == 0.0) continue;
    s0 += 1.0;
    quad += gram_diag[j] * b[j] * b[j];
  }
  return s0 * quad;
}

MarNuisance fit_nuisances(const PrimaryDataset& data, const ExternalSummary& summary,
                          const FoldPlan& plan, const Options& opts) {
  MarNuisance nuis;
  const double gamma_all =
      static_cast<double>(data.n_labeled()) / static_cast<double>(data.n());
  for (int k = 0; k < plan.K; ++k) {
    const FoldComplement& comp = plan.complements[static_cast<std::size_t>(k)];
    if (comp.alpha.labeled.empty())
      throw std::runtime_error("fold " + std::to_string(k) +
                               ": alpha half has no labeled units, so the "
                               "propensity loss is unbounded");
    if (comp.beta.labeled.empty())
      throw std::runtime_error("fold " + std::to_string(k) +
                               ": beta half has no labeled units to regress on");

    optim::TiltProblem tp;
    tp.exp_rows = gather_rows(data.x, comp.alpha.labeled);
    tp.normalizer = static_cast<double>(comp.alpha.size());
    tp.linear = (static_cast<double>(comp.alpha.external_count) / tp.normalizer) *
                summary.mean;
    tp.penalize_intercept = opts.penalize_intercept;
    double th_a = 0.0;
    if (opts.lambda_alpha.kind == optim::LambdaRule::Kind::theory)
      th_a = mcar::theory_lambda(opts.lambda_alpha.value, data.n(), gamma_all, data.d());
    tp.lambda = optim::choose_lambda(
        tp, opts.lambda_alpha,
        derive_seed(opts.seed, 0xa1fau, static_cast<std::uint64_t>(k)), opts.solve, th_a);
    optim::PenalizedFit afit = optim::solve_tilt(tp, opts.solve);

    optim::QuadProblem qp;
    qp.x = gather_rows(data.x, comp.beta.labeled);
    qp.y = gather(data.y, comp.beta.labeled);
    qp.weights.resize(qp.x.rows());
    bool clamped = false;
    for (Eigen::Index i = 0; i < qp.x.rows(); ++i) {
      double s = -qp.x.row(i).dot(afit.beta);
      if (s > opts.solve.exp_clamp) {
        s = opts.solve.exp_clamp;
        clamped = true;
      }
      double w = std::exp(s);
      if (opts.clip_weight > 0.0 && w > opts.clip_weight) w = opts.clip_weight;
      qp.weights[i] = w;
    }
    qp.normalizer = static_cast<double>(comp.beta.size());
    qp.penalize_intercept = opts.penalize_intercept;
    double th_b = 0.0;
    if (opts.lambda_beta.kind == optim::LambdaRule::Kind::theory)
      th_b = mcar::theory_lambda(opts.lambda_beta.value, data.n(), gamma_all, data.d());
    qp.lambda = optim::choose_lambda(
        qp, opts.lambda_beta,
        derive_seed(opts.seed, 0xbe7au, static_cast<std::uint64_t>(k)), opts.solve, th_b);
    optim::PenalizedFit bfit = optim::solve_lasso(qp, opts.solve);

    nuis.alpha.push_back(std::move(afit));
    nuis.beta.push_back(std::move(bfit));
    nuis.weight_clamped.push_back(clamped ? 1 : 0);
  }
  return nuis;
}

EstimateReport theta_g_from_coefs(const PrimaryDataset& data,
                                  const ExternalSummary& summary, const FoldPlan& plan,
                                  const std::vector<Eigen::VectorXd>& alphas,
                                  const std::vector<Eigen::VectorXd>& betas,
                                  const Options& opts) {
  if (alphas.size() != static_cast<std::size_t>(plan.K) || betas.size() != alphas.size())
    throw std::invalid_argument("theta_g: need one alpha and one beta per fold");

  const double n = static_cast<double>(plan.n());
  const double clamp = opts.solve.exp_clamp;
  EstimateReport rep;
  rep.estimand = Estimand::theta_g;
  rep.level = opts.level;
  rep.n = plan.n();
  rep.n_labeled = plan.n_labeled;

  bool exp_clamped = false;
  VarianceSource source = VarianceSource::external_gram;
  double pt = 0.0;
  double var_acc = 0.0;
  for (int k = 0; k < plan.K; ++k) {
    const Fold& fold = plan.folds[static_cast<std::size_t>(k)];
    const Eigen::VectorXd& a = alphas[static_cast<std::size_t>(k)];
    const Eigen::VectorXd& b = betas[static_cast<std::size_t>(k)];
    const double mb = summary.mean.dot(b);
    pt += static_cast<double>(fold.external_count()) * mb;
    for (int row : fold.labeled) {
      const double pred = data.x.row(row).dot(b);
      double s = -data.x.row(row).dot(a);
      if (s > clamp) {
        s = clamp;
        exp_clamped = true;
      }
      double w = 1.0 + std::exp(s);
      if (opts.clip_weight > 0.0 && w > opts.clip_weight) w = opts.clip_weight;
      const double infl = pred + w * (data.y[row] - pred);
      pt += infl;
      var_acc += infl * infl;
    }
    QuadPiece q = quad_with_summary(b, summary);
    if (q.source == VarianceSource::unavailable ||
        (source == VarianceSource::external_gram &&
         q.source == VarianceSource::conservative_diag))
      source = q.source;
    var_acc += static_cast<double>(fold.external_count()) * q.value;
  }
  rep.point = pt / n;
  if (exp_clamped)
    rep.diagnostics.warnings.push_back("inverse-propensity exponent clamped");
  if (source == VarianceSource::unavailable) {
    finish_without_interval(rep, opts);
    return rep;
  }
  attach_interval(rep, var_acc / n - rep.point * rep.point, source);
  return rep;
}

EstimateReport theta_t_from_coefs(const PrimaryDataset& data,
                                  const ExternalSummary& summary, const FoldPlan& plan,
                                  const std::vector<Eigen::VectorXd>& alphas,
                                  const std::vector<Eigen::VectorXd>& betas,
                                  const Options& opts) {
  if (alphas.size() != static_cast<std::size_t>(plan.K) || betas.size() != alphas.size())
    throw std::invalid_argument("theta_t: need one alpha and one beta per fold");

  const double n = static_cast<double>(plan.n());
  const double clamp = opts.solve.exp_clamp;
  EstimateReport rep;
  rep.estimand = Estimand::theta_t;
  rep.level = opts.level;
  rep.n = plan.n();
  rep.n_labeled = plan.n_labeled;

  bool exp_clamped = false;
  VarianceSource source = VarianceSource::external_gram;
  double pt = 0.0;
  std::vector<double> quad_k(static_cast<std::size_t>(plan.K));
  std::vector<double> mb_k(static_cast<std::size_t>(plan.K));
  std::vector<double> resid_sq_k(static_cast<std::size_t>(plan.K), 0.0);
  for (int k = 0; k < plan.K; ++k) {
    const Fold& fold = plan.folds[static_cast<std::size_t>(k)];
    const double gam = plan.gamma_hat(k);
    if (!(gam < 1.0))
      throw std::runtime_error("fold " + std::to_string(k) +
                               " has no external mass (gamma_hat = 1); transport "
                               "weights are undefined");
    const double inv1m = 1.0 / (1.0 - gam);
    const Eigen::VectorXd& a = alphas[static_cast<std::size_t>(k)];
    const Eigen::VectorXd& b = betas[static_cast<std::size_t>(k)];
    mb_k[static_cast<std::size_t>(k)] = summary.mean.dot(b);
    pt += static_cast<double>(fold.external_count()) * inv1m *
          mb_k[static_cast<std::size_t>(k)];
    for (int row : fold.labeled) {
      double s = -data.x.row(row).dot(a);
      if (s > clamp) {
        s = clamp;
        exp_clamped = true;
      }
      double w = std::exp(s);
      if (opts.clip_weight > 0.0 && w > opts.clip_weight) w = opts.clip_weight;
      const double resid = data.y[row] - data.x.row(row).dot(b);
      pt += inv1m * w * resid;
      resid_sq_k[static_cast<std::size_t>(k)] += w * w * resid * resid;
    }
    QuadPiece q = quad_with_summary(b, summary);
    if (q.source == VarianceSource::unavailable ||
        (source == VarianceSource::external_gram &&
         q.source == VarianceSource::conservative_diag))
      source = q.source;
    quad_k[static_cast<std::size_t>(k)] = q.value;
  }
  rep.point = pt / n;
  if (exp_clamped)
    rep.diagnostics.warnings.push_back("transport weight exponent clamped");
  if (source == VarianceSource::unavailable) {
    finish_without_interval(rep, opts);
    return rep;
  }
  double var_acc = 0.0;
  for (int k = 0; k < plan.K; ++k) {
    const Fold& fold = plan.folds[static_cast<std::size_t>(k)];
    const double inv1m = 1.0 / (1.0 - plan.gamma_hat(k));
    var_acc += static_cast<double>(fold.external_count()) * inv1m * inv1m *
               (quad_k[static_cast<std::size_t>(k)] + rep.point * rep.point -
                2.0 * mb_k[static_cast<std::size_t>(k)] * rep.point);
    var_acc += inv1m * inv1m * resid_sq_k[static_cast<std::size_t>(k)];
  }
  attach_interval(rep, var_acc / n, source);
  return rep;
}

namespace {

std::vector<Eigen::VectorXd> coef_of(const std::vector<optim::PenalizedFit>& fits) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(fits.size());
  for (const auto& f : fits) out.push_back(f.beta);
  return out;
}

MarFit estimate_impl(const PrimaryDataset& data, const ExternalSummary& summary,
                     const Options& opts, bool transport) {
  check_inputs(data, summary, opts);
  MarFit fit;
  fit.plan = make_folds(data.n_labeled(), data.n_external, opts.K, opts.seed,
                        /*split_halves=*/true);
  fit.nuisance = fit_nuisances(data, summary, fit.plan, opts);
  const auto alphas = coef_of(fit.nuisance.alpha);
  const auto betas = coef_of(fit.nuisance.beta);
  fit.report = transport
                   ? theta_t_from_coefs(data, summary, fit.plan, alphas, betas, opts)
                   : theta_g_from_coefs(data, summary, fit.plan, alphas, betas, opts);
  merge_nuisance_diagnostics(fit.report, fit.nuisance);
  return fit;
}

}  // namespace

MarFit estimate_theta_g(const PrimaryDataset& data, const ExternalSummary& summary,
                        const Options& opts) {
  return estimate_impl(data, summary, opts, /*transport=*/false);
}

MarFit estimate_theta_t(const PrimaryDataset& data, const ExternalSummary& summary,
                        const Options& opts) {
  return estimate_impl(data, summary, opts, /*transport=*/true);
}

}  // namespace summint::mar
