#include "summint/causal.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "summint/mcar.hpp"
#include "summint/rng.hpp"

namespace summint::causal {

namespace {

void check_inputs(const PrimaryDataset& data, const ExternalSummary& summary,
                  const Options& opts) {
  data.validate();
  summary.validate();
  if (!data.treat)
    throw std::invalid_argument("ate: the dataset carries no treatment labels");
  if (summary.mean.size() != data.d())
    throw std::invalid_argument("ate: summary dimension does not match the data");
  if (summary.n_external != data.n_external)
    throw std::invalid_argument("ate: external counts disagree between data and summary");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    throw std::invalid_argument("ate: level must lie in (0,1)");
  if (opts.clip_weight < 0.0) throw std::invalid_argument("ate: negative weight clip");
}

struct QuadPiece {
  double value = 0.0;
  VarianceSource source = VarianceSource::unavailable;
};

QuadPiece quad_with_summary(const Eigen::VectorXd& b, const ExternalSummary& summary) {
  if (summary.gram) return {b.dot(*summary.gram * b), VarianceSource::external_gram};
  if (summary.gram_diag)
    return {mar::conservative_quad(b, *summary.gram_diag), VarianceSource::conservative_diag};
  return {0.0, VarianceSource::unavailable};
}

// Per-arm nuisances for one arm across all folds. `impute_mean` is the
// linear-term mean for the tilt loss (effective mean in the generalize
// path, plain external mean in the transport path); `inert_opposite` makes
// labeled opposite-arm units contribute nothing to the tilt beyond the
// normalizer.
mar::MarNuisance fit_arm_nuisances(const PrimaryDataset& data,
                                   const Eigen::VectorXd& impute_mean,
                                   const FoldPlan& plan, int arm, bool inert_opposite,
                                   const Options& opts) {
  mar::MarNuisance nuis;
  const Eigen::VectorXi& treat = *data.treat;
  const double gamma_all =
      static_cast<double>(data.n_labeled()) / static_cast<double>(data.n());
  for (int k = 0; k < plan.K; ++k) {
    const FoldComplement& comp = plan.complements[static_cast<std::size_t>(k)];
    std::vector<int> arm_alpha, arm_beta;
    for (int row : comp.alpha.labeled)
      if (treat[row] == arm) arm_alpha.push_back(row);
    for (int row : comp.beta.labeled)
      if (treat[row] == arm) arm_beta.push_back(row);
    if (arm_alpha.empty())
      throw std::runtime_error("arm " + std::to_string(arm) + ": fold " +
                               std::to_string(k) +
                               " alpha half has no labeled units of this arm, so "
                               "the propensity loss is unbounded");
    if (arm_beta.empty())
      throw std::runtime_error("arm " + std::to_string(arm) + ": fold " +
                               std::to_string(k) +
                               " beta half has no labeled units of this arm");

    optim::TiltProblem tp;
    tp.exp_rows.resize(static_cast<Eigen::Index>(arm_alpha.size()), data.d());
    for (std::size_t i = 0; i < arm_alpha.size(); ++i)
      tp.exp_rows.row(static_cast<Eigen::Index>(i)) = data.x.row(arm_alpha[i]);
    tp.normalizer = static_cast<double>(comp.alpha.size());
    const double imputed =
        inert_opposite
            ? static_cast<double>(comp.alpha.external_count)
            : tp.normalizer - static_cast<double>(arm_alpha.size());
    tp.linear = (imputed / tp.normalizer) * impute_mean;
    tp.penalize_intercept = opts.penalize_intercept;
    double th_a = 0.0;
    if (opts.lambda_alpha.kind == optim::LambdaRule::Kind::theory)
      th_a = mcar::theory_lambda(opts.lambda_alpha.value, data.n(), gamma_all, data.d());
    tp.lambda = optim::choose_lambda(
        tp, opts.lambda_alpha,
        derive_seed(opts.seed, 0xca1fa0u + static_cast<std::uint64_t>(arm),
                    static_cast<std::uint64_t>(k)),
        opts.solve, th_a);
    optim::PenalizedFit afit = optim::solve_tilt(tp, opts.solve);

    optim::QuadProblem qp;
    qp.x.resize(static_cast<Eigen::Index>(arm_beta.size()), data.d());
    qp.y.resize(static_cast<Eigen::Index>(arm_beta.size()));
    qp.weights.resize(static_cast<Eigen::Index>(arm_beta.size()));
    bool clamped = false;
    for (std::size_t i = 0; i < arm_beta.size(); ++i) {
      const int row = arm_beta[i];
      qp.x.row(static_cast<Eigen::Index>(i)) = data.x.row(row);
      qp.y[static_cast<Eigen::Index>(i)] = data.y[row];
      double s = -data.x.row(row).dot(afit.beta);
      if (s > opts.solve.exp_clamp) {
        s = opts.solve.exp_clamp;
        clamped = true;
      }
      double w = std::exp(s);
      if (opts.clip_weight > 0.0 && w > opts.clip_weight) w = opts.clip_weight;
      qp.weights[static_cast<Eigen::Index>(i)] = w;
    }
    qp.normalizer = static_cast<double>(comp.beta.size());
    qp.penalize_intercept = opts.penalize_intercept;
    double th_b = 0.0;
    if (opts.lambda_beta.kind == optim::LambdaRule::Kind::theory)
      th_b = mcar::theory_lambda(opts.lambda_beta.value, data.n(), gamma_all, data.d());
    qp.lambda = optim::choose_lambda(
        qp, opts.lambda_beta,
        derive_seed(opts.seed, 0xcbe7a0u + static_cast<std::uint64_t>(arm),
                    static_cast<std::uint64_t>(k)),
        opts.solve, th_b);
    optim::PenalizedFit bfit = optim::solve_lasso(qp, opts.solve);

    nuis.alpha.push_back(std::move(afit));
    nuis.beta.push_back(std::move(bfit));
    nuis.weight_clamped.push_back(clamped ? 1 : 0);
  }
  return nuis;
}

void merge_arm_diagnostics(EstimateReport& rep, const mar::MarNuisance& nuis, int arm) {
  const int K = static_cast<int>(nuis.alpha.size());
  for (int k = 0; k < K; ++k) {
    for (const char* role : {"alpha", "beta"}) {
      const optim::PenalizedFit& f =
          role[0] == 'a' ? nuis.alpha[static_cast<std::size_t>(k)]
                         : nuis.beta[static_cast<std::size_t>(k)];
      FitDiagnostics fd;
      fd.fold = k;
      fd.arm = arm;
      fd.role = role;
      fd.lambda = f.lambda;
      fd.support_size = static_cast<int>(f.support.size());
      fd.iterations = f.iterations;
      fd.converged = f.converged;
      fd.clamped = f.clamped;
      rep.diagnostics.fits.push_back(fd);
      if (!f.converged)
        rep.diagnostics.warnings.push_back("arm " + std::to_string(arm) + " fold " +
                                           std::to_string(k) + " " + role +
                                           " fit did not reach tolerance");
    }
    if (nuis.weight_clamped[static_cast<std::size_t>(k)])
      rep.diagnostics.warnings.push_back("arm " + std::to_string(arm) + " fold " +
                                         std::to_string(k) +
                                         " regression weights hit the exponent clamp");
  }
}

void finish_without_interval(EstimateReport& rep, const Options& opts) {
  if (opts.require_ci)
    throw std::runtime_error(
        "variance unavailable: the summary carries no second-moment information");
  rep.diagnostics.variance_source = VarianceSource::unavailable;
  rep.diagnostics.warnings.push_back(
      "no second-moment information in the summary; interval omitted");
}

void check_coef_sizes(const FoldPlan& plan, const std::vector<Eigen::VectorXd>& a1,
                      const std::vector<Eigen::VectorXd>& b1,
                      const std::vector<Eigen::VectorXd>& a0,
                      const std::vector<Eigen::VectorXd>& b0) {
  const std::size_t K = static_cast<std::size_t>(plan.K);
  if (a1.size() != K || b1.size() != K || a0.size() != K || b0.size() != K)
    throw std::invalid_argument("ate: need one coefficient vector per arm per fold");
}

std::vector<Eigen::VectorXd> coef_of(const std::vector<optim::PenalizedFit>& fits) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(fits.size());
  for (const auto& f : fits) out.push_back(f.beta);
  return out;
}

}  // namespace

std::pair<Eigen::VectorXd, std::int64_t> effective_summary_g(
    int arm, const ExternalSummary& summary, const PrimaryDataset& data) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("effective summary: arm must be 0 or 1");
  if (!data.treat)
    throw std::invalid_argument("effective summary: the dataset carries no treatment labels");
  const Eigen::VectorXi& treat = *data.treat;
  Eigen::VectorXd acc = static_cast<double>(summary.n_external) * summary.mean;
  std::int64_t count = summary.n_external;
  for (Eigen::Index i = 0; i < data.x.rows(); ++i) {
    if (treat[i] == arm) continue;
    acc += data.x.row(i).transpose();
    ++count;
  }
  if (count == 0)
    throw std::runtime_error("arm " + std::to_string(arm) +
                             ": every unit is a labeled unit of this arm; the "
                             "effective external group is empty");
  Eigen::VectorXd mean = acc / static_cast<double>(count);
  mean[0] = 1.0;
  return {mean, count};
}

EstimateReport tau_g_from_coefs(const PrimaryDataset& data,
                                const ExternalSummary& summary, const FoldPlan& plan,
                                const std::vector<Eigen::VectorXd>& alpha1,
                                const std::vector<Eigen::VectorXd>& beta1,
                                const std::vector<Eigen::VectorXd>& alpha0,
                                const std::vector<Eigen::VectorXd>& beta0,
                                const Options& opts) {
  check_coef_sizes(plan, alpha1, beta1, alpha0, beta0);
  const Eigen::VectorXi& treat = *data.treat;
  const Eigen::VectorXd mean1 = effective_summary_g(1, summary, data).first;
  const Eigen::VectorXd mean0 = effective_summary_g(0, summary, data).first;
  const double n = static_cast<double>(plan.n());
  const double clamp = opts.solve.exp_clamp;

  EstimateReport rep;
  rep.estimand = Estimand::tau_g;
  rep.level = opts.level;
  rep.n = plan.n();
  rep.n_labeled = plan.n_labeled;

  bool exp_clamped = false;
  VarianceSource source = VarianceSource::external_gram;
  double pt1 = 0.0, pt0 = 0.0;
  double var_acc = 0.0;
  for (int k = 0; k < plan.K; ++k) {
    const Fold& fold = plan.folds[static_cast<std::size_t>(k)];
    const std::size_t sk = static_cast<std::size_t>(k);
    const Eigen::VectorXd delta = beta1[sk] - beta0[sk];
    const double mb1 = mean1.dot(beta1[sk]);
    const double mb0 = mean0.dot(beta0[sk]);
    std::int64_t in_arm1 = 0, in_arm0 = 0;
    for (int row : fold.labeled) {
      const int a = treat[row];
      const Eigen::VectorXd& b = a == 1 ? beta1[sk] : beta0[sk];
      const Eigen::VectorXd& al = a == 1 ? alpha1[sk] : alpha0[sk];
      const double pred = data.x.row(row).dot(b);
      double s = -data.x.row(row).dot(al);
      if (s > clamp) {
        s = clamp;
        exp_clamped = true;
      }
      double w = 1.0 + std::exp(s);
      if (opts.clip_weight > 0.0 && w > opts.clip_weight) w = opts.clip_weight;
      const double resid = data.y[row] - pred;
      const double xd = data.x.row(row).dot(delta);
      if (a == 1) {
        ++in_arm1;
        pt1 += pred + w * resid;
        const double infl = xd + w * resid;
        var_acc += infl * infl;
      } else {
        ++in_arm0;
        pt0 += pred + w * resid;
        const double infl = xd - w * resid;
        var_acc += infl * infl;
      }
    }
    pt1 += static_cast<double>(fold.size() - in_arm1) * mb1;
    pt0 += static_cast<double>(fold.size() - in_arm0) * mb0;
    QuadPiece q = quad_with_summary(delta, summary);
    if (q.source == VarianceSource::unavailable ||
        (source == VarianceSource::external_gram &&
         q.source == VarianceSource::conservative_diag))
      source = q.source;
    var_acc += static_cast<double>(fold.external_count()) * q.value;
  }
  rep.diagnostics.arm1_point = pt1 / n;
  rep.diagnostics.arm0_point = pt0 / n;
  rep.point = (pt1 - pt0) / n;
  if (exp_clamped)
    rep.diagnostics.warnings.push_back("inverse-propensity exponent clamped");
  if (source == VarianceSource::unavailable) {
    finish_without_interval(rep, opts);
    return rep;
  }
  attach_interval(rep, var_acc / n - rep.point * rep.point, source);
  return rep;
}

EstimateReport tau_t_from_coefs(const PrimaryDataset& data,
                                const ExternalSummary& summary, const FoldPlan& plan,
                                const std::vector<Eigen::VectorXd>& alpha1,
                                const std::vector<Eigen::VectorXd>& beta1,
                                const std::vector<Eigen::VectorXd>& alpha0,
                                const std::vector<Eigen::VectorXd>& beta0,
                                const Options& opts) {
  check_coef_sizes(plan, alpha1, beta1, alpha0, beta0);
  const Eigen::VectorXi& treat = *data.treat;
  const double n = static_cast<double>(plan.n());
  const double K = static_cast<double>(plan.K);
  const double clamp = opts.solve.exp_clamp;

  EstimateReport rep;
  rep.estimand = Estimand::tau_t;
  rep.level = opts.level;
  rep.n = plan.n();
  rep.n_labeled = plan.n_labeled;

  bool exp_clamped = false;
  VarianceSource source = VarianceSource::external_gram;
  double pt1 = 0.0, pt0 = 0.0;
  std::vector<double> quad_k(static_cast<std::size_t>(plan.K));
  std::vector<double> md_k(static_cast<std::size_t>(plan.K));
  std::vector<double> resid1_k(static_cast<std::size_t>(plan.K), 0.0);
  std::vector<double> resid0_k(static_cast<std::size_t>(plan.K), 0.0);
  for (int k = 0; k < plan.K; ++k) {
    const Fold& fold = plan.folds[static_cast<std::size_t>(k)];
    const std::size_t sk = static_cast<std::size_t>(k);
    const double gam = plan.gamma_hat(k);
    if (!(gam < 1.0))
      throw std::runtime_error("fold " + std::to_string(k) +
                               " has no external mass (gamma_hat = 1); transport "
                               "weights are undefined");
    const double inv1m = 1.0 / (1.0 - gam);
    const Eigen::VectorXd delta = beta1[sk] - beta0[sk];
    pt1 += summary.mean.dot(beta1[sk]) / K;
    pt0 += summary.mean.dot(beta0[sk]) / K;
    md_k[sk] = summary.mean.dot(delta);
    for (int row : fold.labeled) {
      const int a = treat[row];
      const Eigen::VectorXd& b = a == 1 ? beta1[sk] : beta0[sk];
      const Eigen::VectorXd& al = a == 1 ? alpha1[sk] : alpha0[sk];
      double s = -data.x.row(row).dot(al);
      if (s > clamp) {
        s = clamp;
        exp_clamped = true;
      }
      double w = std::exp(s);
      if (opts.clip_weight > 0.0 && w > opts.clip_weight) w = opts.clip_weight;
      const double resid = data.y[row] - data.x.row(row).dot(b);
      if (a == 1) {
        pt1 += inv1m * w * resid / n;
        resid1_k[sk] += w * w * resid * resid;
      } else {
        pt0 += inv1m * w * resid / n;
        resid0_k[sk] += w * w * resid * resid;
      }
    }
    QuadPiece q = quad_with_summary(delta, summary);
    if (q.source == VarianceSource::unavailable ||
        (source == VarianceSource::external_gram &&
         q.source == VarianceSource::conservative_diag))
      source = q.source;
    quad_k[sk] = q.value;
  }
  rep.diagnostics.arm1_point = pt1;
  rep.diagnostics.arm0_point = pt0;
  rep.point = pt1 - pt0;
  if (exp_clamped)
    rep.diagnostics.warnings.push_back("transport weight exponent clamped");
  if (source == VarianceSource::unavailable) {
    finish_without_interval(rep, opts);
    return rep;
  }
  double var_acc = 0.0;
  for (int k = 0; k < plan.K; ++k) {
    const std::size_t sk = static_cast<std::size_t>(k);
    const double inv1m = 1.0 / (1.0 - plan.gamma_hat(k));
    var_acc += (quad_k[sk] - 2.0 * rep.point * md_k[sk] + rep.point * rep.point) *
               inv1m / K;
    var_acc += inv1m * inv1m * (resid1_k[sk] + resid0_k[sk]) / n;
  }
  attach_interval(rep, var_acc, source);
  return rep;
}

AteFit estimate_ate_generalize(const PrimaryDataset& data,
                               const ExternalSummary& summary, const Options& opts) {
  check_inputs(data, summary, opts);
  AteFit fit;
  fit.plan = make_folds(data.n_labeled(), data.n_external, opts.K, opts.seed,
                        /*split_halves=*/true);
  const Eigen::VectorXd mean1 = effective_summary_g(1, summary, data).first;
  const Eigen::VectorXd mean0 = effective_summary_g(0, summary, data).first;
  fit.arm1 = fit_arm_nuisances(data, mean1, fit.plan, 1, /*inert_opposite=*/false, opts);
  fit.arm0 = fit_arm_nuisances(data, mean0, fit.plan, 0, /*inert_opposite=*/false, opts);
  fit.report = tau_g_from_coefs(data, summary, fit.plan, coef_of(fit.arm1.alpha),
                                coef_of(fit.arm1.beta), coef_of(fit.arm0.alpha),
                                coef_of(fit.arm0.beta), opts);
  merge_arm_diagnostics(fit.report, fit.arm1, 1);
  merge_arm_diagnostics(fit.report, fit.arm0, 0);
  return fit;
}

AteFit estimate_ate_transport(const PrimaryDataset& data,
                              const ExternalSummary& summary, const Options& opts) {
  check_inputs(data, summary, opts);
  AteFit fit;
  fit.plan = make_folds(data.n_labeled(), data.n_external, opts.K, opts.seed,
                        /*split_halves=*/true);
  fit.arm1 =
      fit_arm_nuisances(data, summary.mean, fit.plan, 1, /*inert_opposite=*/true, opts);
  fit.arm0 =
      fit_arm_nuisances(data, summary.mean, fit.plan, 0, /*inert_opposite=*/true, opts);
  fit.report = tau_t_from_coefs(data, summary, fit.plan, coef_of(fit.arm1.alpha),
                                coef_of(fit.arm1.beta), coef_of(fit.arm0.alpha),
                                coef_of(fit.arm0.beta), opts);
  merge_arm_diagnostics(fit.report, fit.arm1, 1);
  merge_arm_diagnostics(fit.report, fit.arm0, 0);
  return fit;
}

}  // namespace summint::causal
