#include "summint/plm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "summint/mar.hpp"
#include "summint/rng.hpp"

namespace summint::plm {

namespace {

constexpr int kDegree = 3;  // cubic

// De Boor basis evaluation: the kDegree+1 B-splines that are nonzero on
// the span holding u. `i` is the span index with knots[i] <= u < knots[i+1].
void basis_funs(const Eigen::VectorXd& knots, int i, double u, double* out) {
  double left[kDegree + 1];
  double right[kDegree + 1];
  out[0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = u - knots[i + 1 - j];
    right[j] = knots[i + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    out[j] = saved;
  }
}

int find_span(const Eigen::VectorXd& knots, int ncoef, double u) {
  // valid spans run from kDegree to ncoef - 1
  if (u >= knots[ncoef]) return ncoef - 1;
  int lo = kDegree, hi = ncoef;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (knots[mid] <= u)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace

void PlmDataset::validate() const {
  base.validate();
  if (z_labeled.rows() != base.x.rows())
    throw std::invalid_argument("plm data: one z row per labeled unit required");
  if (z_labeled.cols() < 1 || z_labeled.cols() > 5)
    throw std::invalid_argument("plm data: z must have between 1 and 5 columns");
  if (z_external.rows() != base.n_external || z_external.cols() != z_labeled.cols())
    throw std::invalid_argument(
        "plm data: individualized external z rows required (one per external "
        "unit, matching the labeled z width)");
  if (!z_labeled.allFinite() || !z_external.allFinite())
    throw std::invalid_argument("plm data: non-finite z value");
}

SplineBasis SplineBasis::build(const Eigen::MatrixXd& z, int interior_knots) {
  if (interior_knots < 0) throw std::invalid_argument("spline basis: negative knot count");
  SplineBasis basis;
  const Eigen::Index r = z.cols();
  basis.knots.resize(static_cast<std::size_t>(r));
  basis.offsets.resize(static_cast<std::size_t>(r));
  basis.ncoefs.resize(static_cast<std::size_t>(r));
  for (Eigen::Index j = 0; j < r; ++j) {
    std::vector<double> v(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) v[static_cast<std::size_t>(i)] = z(i, j);
    std::sort(v.begin(), v.end());
    const double lo = v.front();
    const double hi = v.back();
    basis.offsets[static_cast<std::size_t>(j)] = basis.total;
    if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(lo)))) {
      basis.ncoefs[static_cast<std::size_t>(j)] = 0;  // constant coordinate
      continue;
    }
    std::vector<double> interior;
    for (int t = 1; t <= interior_knots; ++t) {
      const double q = static_cast<double>(t) / static_cast<double>(interior_knots + 1);
      const double pos = q * static_cast<double>(v.size() - 1);
      const std::size_t i0 = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(i0);
      const double val = i0 + 1 < v.size() ? v[i0] * (1.0 - frac) + v[i0 + 1] * frac
                                           : v[i0];
      if (val > lo && val < hi && (interior.empty() || val > interior.back()))
        interior.push_back(val);
    }
    const int m = static_cast<int>(interior.size());
    const int ncoef = m + kDegree + 1;
    Eigen::VectorXd knots(m + 2 * (kDegree + 1));
    for (int t = 0; t <= kDegree; ++t) knots[t] = lo;
    for (int t = 0; t < m; ++t) knots[kDegree + 1 + t] = interior[static_cast<std::size_t>(t)];
    for (int t = 0; t <= kDegree; ++t) knots[kDegree + 1 + m + t] = hi;
    basis.knots[static_cast<std::size_t>(j)] = std::move(knots);
    basis.ncoefs[static_cast<std::size_t>(j)] = ncoef;
    basis.total += ncoef;
  }
  return basis;
}

Eigen::RowVectorXd SplineBasis::eval_row(const Eigen::VectorXd& z) const {
  if (z.size() != static_cast<Eigen::Index>(ncoefs.size()))
    throw std::invalid_argument("spline basis: z width does not match the basis");
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(total);
  for (std::size_t j = 0; j < ncoefs.size(); ++j) {
    const int ncoef = ncoefs[j];
    if (ncoef == 0) continue;
    const Eigen::VectorXd& kn = knots[j];
    double u = z[static_cast<Eigen::Index>(j)];
    u = std::min(std::max(u, kn[0]), kn[kn.size() - 1]);
    const int span = find_span(kn, ncoef, u);
    double vals[kDegree + 1];
    basis_funs(kn, span, u, vals);
    for (int t = 0; t <= kDegree; ++t)
      row[offsets[j] + span - kDegree + t] = vals[t];
  }
  return row;
}

Eigen::MatrixXd SplineBasis::eval(const Eigen::MatrixXd& z) const {
  Eigen::MatrixXd out(z.rows(), total);
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = eval_row(z.row(i).transpose());
  return out;
}

PlmFitResult fit_plm(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                     const Eigen::VectorXd& y, double lambda, double eta,
                     double alt_tol, int max_alt, const optim::SolveOptions& solve,
                     bool penalize_intercept, const Eigen::VectorXd* warm_beta) {
  if (x.rows() != z.rows() || x.rows() != y.size())
    throw std::invalid_argument("plm fit: row count mismatch");
  if (x.rows() < 20)
    throw std::invalid_argument("plm fit: need at least 20 rows to place knots");
  if (z.cols() < 1 || z.cols() > 5)
    throw std::invalid_argument("plm fit: z must have between 1 and 5 columns");
  if (lambda < 0.0 || eta < 0.0)
    throw std::invalid_argument("plm fit: negative penalty");
  if (max_alt < 1) throw std::invalid_argument("plm fit: need at least one alternation");

  PlmFitResult res;
  res.lambda = lambda;
  res.eta = eta;
  res.f.basis = SplineBasis::build(z);
  const Eigen::MatrixXd bmat = res.f.basis.eval(z);
  const Eigen::Index p = bmat.cols();
  const double nn = static_cast<double>(x.rows());

  Eigen::LDLT<Eigen::MatrixXd> ridge;
  if (p > 0)
    ridge.compute(bmat.transpose() * bmat / nn +
                  eta * Eigen::MatrixXd::Identity(p, p));

  optim::QuadProblem prob;
  prob.x = x;
  prob.weights = Eigen::VectorXd::Ones(x.rows());
  prob.normalizer = nn;
  prob.lambda = lambda;
  prob.penalize_intercept = penalize_intercept;

  Eigen::VectorXd beta =
      warm_beta ? *warm_beta : Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(p);
  optim::PenalizedFit bfit;
  double prev = std::numeric_limits<double>::infinity();
  for (int alt = 1; alt <= max_alt; ++alt) {
    res.alternations = alt;
    prob.y = p > 0 ? Eigen::VectorXd(y - bmat * coef) : y;
    bfit = optim::solve_lasso(prob, solve, &beta);
    beta = bfit.beta;
    if (p > 0) coef = ridge.solve(bmat.transpose() * (y - x * beta) / nn);

    const Eigen::VectorXd resid =
        p > 0 ? Eigen::VectorXd(y - x * beta - bmat * coef)
              : Eigen::VectorXd(y - x * beta);
    double obj = resid.squaredNorm() / nn + eta * coef.squaredNorm();
    for (Eigen::Index jc = penalize_intercept ? 0 : 1; jc < beta.size(); ++jc)
      obj += lambda * std::abs(beta[jc]);
    if (alt > 1 && prev - obj <= alt_tol * std::max(1.0, std::abs(prev))) {
      res.converged = bfit.converged;
      res.objective = obj;
      break;
    }
    prev = obj;
    res.objective = obj;
  }
  res.beta = beta;
  res.f.coef = coef;
  return res;
}

namespace {

struct PlmChoice {
  double lambda = 0.0;
  double eta = 0.0;
};

std::vector<int> chunk(const std::vector<int>& perm, int K_cv, int k, bool in_fold) {
  const std::size_t nrows = perm.size();
  const std::size_t base = nrows / static_cast<std::size_t>(K_cv);
  const std::size_t extra = nrows % static_cast<std::size_t>(K_cv);
  std::size_t begin = 0;
  for (int f = 0; f < k; ++f)
    begin += base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
  const std::size_t len = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
  std::vector<int> out;
  for (std::size_t i = 0; i < nrows; ++i) {
    const bool inside = i >= begin && i < begin + len;
    if (inside == in_fold) out.push_back(perm[i]);
  }
  return out;
}

PlmChoice choose_plm(const Eigen::MatrixXd& x, const Eigen::MatrixXd& z,
                     const Eigen::VectorXd& y, const Options& opts,
                     std::uint64_t seed) {
  optim::QuadProblem anchor;
  anchor.x = x;
  anchor.y = y;
  anchor.weights = Eigen::VectorXd::Ones(x.rows());
  anchor.normalizer = static_cast<double>(x.rows());
  anchor.penalize_intercept = opts.penalize_intercept;
  const std::vector<double> lgrid =
      optim::default_grid(optim::lambda_max(anchor), opts.lambda_points,
                          opts.lambda_ratio);

  const SplineBasis full_basis = SplineBasis::build(z);
  std::vector<double> egrid;
  if (full_basis.total == 0) {
    egrid.push_back(1.0);
  } else {
    const Eigen::MatrixXd bmat = full_basis.eval(z);
    const double scale = bmat.squaredNorm() /
                         (static_cast<double>(x.rows()) *
                          static_cast<double>(full_basis.total));
    for (int j = 0; j < opts.eta_points; ++j)
      egrid.push_back(scale * std::pow(10.0, 1.0 - j));
  }

  if (static_cast<Eigen::Index>(opts.cv_folds) > x.rows())
    throw std::invalid_argument("plm cv: fewer rows than CV folds");
  std::vector<int> perm(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, 0x60cdu));
  rng.shuffle(perm);

  const std::size_t ncombo = egrid.size() * lgrid.size();
  std::vector<double> loss_sum(ncombo, 0.0);
  int usable = 0;
  for (int f = 0; f < opts.cv_folds; ++f) {
    const std::vector<int> train = chunk(perm, opts.cv_folds, f, false);
    const std::vector<int> test = chunk(perm, opts.cv_folds, f, true);
    if (train.empty() || test.empty()) continue;
    Eigen::MatrixXd xtr(static_cast<Eigen::Index>(train.size()), x.cols());
    Eigen::MatrixXd ztr(static_cast<Eigen::Index>(train.size()), z.cols());
    Eigen::VectorXd ytr(static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = x.row(train[i]);
      ztr.row(static_cast<Eigen::Index>(i)) = z.row(train[i]);
      ytr[static_cast<Eigen::Index>(i)] = y[train[i]];
    }
    std::vector<double> fold_loss(ncombo, 0.0);
    bool failed = false;
    std::size_t combo = 0;
    for (std::size_t e = 0; e < egrid.size() && !failed; ++e) {
      Eigen::VectorXd warm = Eigen::VectorXd::Zero(x.cols());
      for (std::size_t l = 0; l < lgrid.size(); ++l, ++combo) {
        try {
          PlmFitResult fit =
              fit_plm(xtr, ztr, ytr, lgrid[l], egrid[e], opts.alt_tol, opts.max_alt,
                      opts.solve, opts.penalize_intercept, &warm);
          warm = fit.beta;
          double acc = 0.0;
          for (int row : test) {
            const double pred = x.row(row).dot(fit.beta) +
                                fit.f.eval(z.row(row).transpose());
            const double diff = y[row] - pred;
            acc += diff * diff;
          }
          acc /= static_cast<double>(test.size());
          fold_loss[combo] = std::isfinite(acc)
                                 ? acc
                                 : std::numeric_limits<double>::infinity();
        } catch (const std::exception&) {
          failed = true;
          break;
        }
      }
    }
    if (failed) continue;
    for (std::size_t cidx = 0; cidx < ncombo; ++cidx) loss_sum[cidx] += fold_loss[cidx];
    ++usable;
  }
  if (usable == 0) throw std::runtime_error("plm cv: every fold failed to fit");

  PlmChoice best;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t combo = 0;
  for (std::size_t e = 0; e < egrid.size(); ++e)
    for (std::size_t l = 0; l < lgrid.size(); ++l, ++combo)
      if (loss_sum[combo] < best_loss) {
        best_loss = loss_sum[combo];
        best.lambda = lgrid[l];
        best.eta = egrid[e];
      }
  return best;
}

void z_shift_warnings(const PlmDataset& data, EstimateReport& rep) {
  const Eigen::Index r = data.z_labeled.cols();
  const Eigen::Index nl = data.z_labeled.rows();
  const Eigen::Index ne = data.z_external.rows();
  if (nl < 2 || ne < 2) return;
  for (Eigen::Index j = 0; j < r; ++j) {
    const double ml = data.z_labeled.col(j).mean();
    const double me = data.z_external.col(j).mean();
    const double vl =
        (data.z_labeled.col(j).array() - ml).square().sum() / static_cast<double>(nl - 1);
    const double ve =
        (data.z_external.col(j).array() - me).square().sum() / static_cast<double>(ne - 1);
    const double se = std::sqrt(vl / static_cast<double>(nl) + ve / static_cast<double>(ne));
    if (se > 0.0 && std::abs(ml - me) / se > 4.0)
      rep.diagnostics.warnings.push_back(
          "z column " + std::to_string(j) +
          " differs between labeled and external units (smooth-covariate shift); "
          "the estimate assumes labeling is independent of everything");
  }
}

}  // namespace

EstimateReport aggregate_plm(const PlmDataset& data, const ExternalSummary& summary,
                             const FoldPlan& plan,
                             const std::vector<PlmFitResult>& fits, const Options& opts) {
  if (fits.size() != static_cast<std::size_t>(plan.K))
    throw std::invalid_argument("plm aggregate: need one fit per fold");
  const double n = static_cast<double>(plan.n());

  EstimateReport rep;
  rep.estimand = Estimand::mean_plm;
  rep.level = opts.level;
  rep.n = plan.n();
  rep.n_labeled = plan.n_labeled;

  VarianceSource source = VarianceSource::external_gram;
  double pt = 0.0;
  double var_acc = 0.0;
  for (int k = 0; k < plan.K; ++k) {
    const Fold& fold = plan.folds[static_cast<std::size_t>(k)];
    const PlmFitResult& fit = fits[static_cast<std::size_t>(k)];
    const double inv_g = 1.0 / plan.gamma_hat(k);
    const double mb = summary.mean.dot(fit.beta);
    for (int row : fold.labeled) {
      const double pred = data.base.x.row(row).dot(fit.beta);
      const double fz = fit.f.eval(data.z_labeled.row(row).transpose());
      const double infl = (pred + fz) + inv_g * (data.base.y[row] - pred - fz);
      pt += infl;
      var_acc += infl * infl;
    }
    double fsum = 0.0, fsq = 0.0;
    for (int e : fold.external_ids) {
      const double fe = fit.f.eval(data.z_external.row(e).transpose());
      fsum += fe;
      fsq += fe * fe;
    }
    pt += static_cast<double>(fold.external_count()) * mb;
    pt += fsum;
    double quad = 0.0;
    if (summary.gram) {
      quad = fit.beta.dot(*summary.gram * fit.beta);
    } else if (summary.gram_diag) {
      quad = mar::conservative_quad(fit.beta, *summary.gram_diag);
      if (source == VarianceSource::external_gram)
        source = VarianceSource::conservative_diag;
    } else {
      source = VarianceSource::unavailable;
    }
    var_acc += static_cast<double>(fold.external_count()) * quad + fsq + 2.0 * mb * fsum;
  }
  rep.point = pt / n;
  if (source == VarianceSource::unavailable) {
    if (opts.require_ci)
      throw std::runtime_error(
          "variance unavailable: the summary carries no second-moment information");
    rep.diagnostics.variance_source = VarianceSource::unavailable;
    rep.diagnostics.warnings.push_back(
        "no second-moment information in the summary; interval omitted");
    return rep;
  }
  attach_interval(rep, var_acc / n - rep.point * rep.point, source);
  return rep;
}

PlmFit estimate_mean_plm(const PlmDataset& data, const ExternalSummary& summary,
                         const Options& opts) {
  data.validate();
  summary.validate();
  if (summary.mean.size() != data.base.d())
    throw std::invalid_argument("plm: summary dimension does not match the data");
  if (summary.n_external != data.base.n_external)
    throw std::invalid_argument("plm: external counts disagree between data and summary");
  if (!(opts.level > 0.0 && opts.level < 1.0))
    throw std::invalid_argument("plm: level must lie in (0,1)");

  PlmFit out;
  out.plan = make_folds(data.base.n_labeled(), data.base.n_external, opts.K, opts.seed,
                        /*split_halves=*/false);
  for (int k = 0; k < out.plan.K; ++k) {
    const FoldComplement& comp = out.plan.complements[static_cast<std::size_t>(k)];
    Eigen::MatrixXd xk(static_cast<Eigen::Index>(comp.labeled.size()), data.base.d());
    Eigen::MatrixXd zk(static_cast<Eigen::Index>(comp.labeled.size()),
                       data.z_labeled.cols());
    Eigen::VectorXd yk(static_cast<Eigen::Index>(comp.labeled.size()));
    for (std::size_t i = 0; i < comp.labeled.size(); ++i) {
      xk.row(static_cast<Eigen::Index>(i)) = data.base.x.row(comp.labeled[i]);
      zk.row(static_cast<Eigen::Index>(i)) = data.z_labeled.row(comp.labeled[i]);
      yk[static_cast<Eigen::Index>(i)] = data.base.y[comp.labeled[i]];
    }
    const PlmChoice choice = choose_plm(
        xk, zk, yk, opts, derive_seed(opts.seed, 0x914du, static_cast<std::uint64_t>(k)));
    out.fold_fits.push_back(fit_plm(xk, zk, yk, choice.lambda, choice.eta, opts.alt_tol,
                                    opts.max_alt, opts.solve, opts.penalize_intercept));
    out.gamma_hats.push_back(out.plan.gamma_hat(k));
  }
  out.report = aggregate_plm(data, summary, out.plan, out.fold_fits, opts);
  for (int k = 0; k < out.plan.K; ++k) {
    const PlmFitResult& f = out.fold_fits[static_cast<std::size_t>(k)];
    FitDiagnostics lin;
    lin.fold = k;
    lin.role = "beta";
    lin.lambda = f.lambda;
    int nz = 0;
    for (Eigen::Index j = 0; j < f.beta.size(); ++j)
      if (f.beta[j] != 0.0) ++nz;
    lin.support_size = nz;
    lin.iterations = f.alternations;
    lin.converged = f.converged;
    out.report.diagnostics.fits.push_back(lin);
    FitDiagnostics sm;
    sm.fold = k;
    sm.role = "spline";
    sm.lambda = f.eta;
    sm.support_size = static_cast<int>(f.f.coef.size());
    sm.iterations = f.alternations;
    sm.converged = f.converged;
    out.report.diagnostics.fits.push_back(sm);
    if (!f.converged)
      out.report.diagnostics.warnings.push_back(
          "fold " + std::to_string(k) + " alternation did not reach tolerance");
  }
  z_shift_warnings(data, out.report);
  return out;
}

}  // namespace summint::plm
