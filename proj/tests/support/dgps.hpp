#pragma once

// Synthetic populations shared by the statistical tests: a correctly
// specified linear model under completely-random labeling, the two
// half-misspecified labeling designs used by the robustness checks, a
// partially linear design with one smooth covariate, and a two-arm
// design with a constant treatment effect. Population targets are
// computed here by (Rao-Blackwellized) Monte Carlo, never by the
// estimators under test.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "summint/plm.hpp"
#include "summint/rng.hpp"
#include "summint/types.hpp"

namespace dgps {

inline Eigen::VectorXd draw_row(summint::Rng& rng, int d) {
  Eigen::VectorXd x(d);
  x[0] = 1.0;
  for (int j = 1; j < d; ++j) x[j] = rng.truncated_normal();
  return x;
}

// theta = E[x'beta] = 2 for every d, s (non-intercept coords have mean 0).
inline Eigen::VectorXd linear_beta(int d, int s) {
  if (d < s + 1) throw std::invalid_argument("linear_beta: d too small");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
  b[0] = 2.0;
  for (int j = 1; j <= s; ++j) b[j] = 1.5 / std::sqrt(static_cast<double>(s));
  return b;
}

inline Eigen::VectorXd labeling_alpha(int d, int s, double alpha_n) {
  if (d < s + 2) throw std::invalid_argument("labeling_alpha: d too small");
  Eigen::VectorXd a = Eigen::VectorXd::Zero(d);
  a[0] = alpha_n;
  a[1] = 1.0;
  for (int j = 2; j <= s; ++j) a[j] = 1.0 / static_cast<double>(s - 1);
  return a;
}

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

struct MeanDraw {
  summint::PrimaryDataset data;
  summint::ExternalSummary summary;
};

// Labeling probability p(x) and conditional outcome mean m(x) passed as
// callables over the full covariate row.
template <class PFn, class MFn>
MeanDraw gen_mean(std::uint64_t seed, int n, int d, PFn label_prob, MFn cond_mean,
                  double sig_eps = 1.0) {
  summint::Rng rng(seed);
  std::vector<Eigen::VectorXd> lab;
  std::vector<double> ys;
  std::vector<Eigen::VectorXd> ext;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = draw_row(rng, d);
    const double u = rng.uniform();
    if (u < label_prob(x)) {
      ys.push_back(cond_mean(x) + sig_eps * rng.normal());
      lab.push_back(std::move(x));
    } else {
      ext.push_back(std::move(x));
    }
  }
  if (lab.empty() || ext.empty())
    throw std::runtime_error("gen_mean: degenerate labeling draw");
  MeanDraw out;
  out.data.x.resize(static_cast<Eigen::Index>(lab.size()), d);
  out.data.y.resize(static_cast<Eigen::Index>(lab.size()));
  for (std::size_t i = 0; i < lab.size(); ++i) {
    out.data.x.row(static_cast<Eigen::Index>(i)) = lab[i].transpose();
    out.data.y[static_cast<Eigen::Index>(i)] = ys[i];
  }
  Eigen::MatrixXd ext_rows(static_cast<Eigen::Index>(ext.size()), d);
  for (std::size_t i = 0; i < ext.size(); ++i)
    ext_rows.row(static_cast<Eigen::Index>(i)) = ext[i].transpose();
  out.data.n_external = static_cast<std::int64_t>(ext.size());
  out.summary = summint::summarize_external(ext_rows, "full");
  return out;
}

inline MeanDraw gen_linear_mcar(std::uint64_t seed, int n, int d, int s,
                                double gamma, double sig_eps = 1.0) {
  const Eigen::VectorXd beta = linear_beta(d, s);
  return gen_mean(
      seed, n, d, [gamma](const Eigen::VectorXd&) { return gamma; },
      [&beta](const Eigen::VectorXd& x) { return x.dot(beta); }, sig_eps);
}

// Logistic labeling on a sparse linear score (so the tilt fit is
// correctly specified) with a quadratic conditional mean the linear
// regression cannot represent.
inline MeanDraw gen_correct_ps_wrong_or(std::uint64_t seed, int n, int d, int s,
                                        double alpha_n) {
  const Eigen::VectorXd alpha = labeling_alpha(d, s, alpha_n);
  return gen_mean(
      seed, n, d,
      [&alpha](const Eigen::VectorXd& x) { return logistic(x.dot(alpha)); },
      [](const Eigen::VectorXd& x) {
        return 1.0 + x[1] + 0.8 * x[1] * x[1];
      });
}

// Bounded non-logistic labeling (marginal exactly 0.2 by symmetry of the
// covariate law) with a sparse linear conditional mean.
inline double wavy_prob(const Eigen::VectorXd& x) {
  return 0.4 * (0.3 * std::sin(x[1]) + 0.5);
}

inline MeanDraw gen_wrong_ps_correct_or(std::uint64_t seed, int n, int d, int s) {
  const Eigen::VectorXd beta = linear_beta(d, s);
  return gen_mean(seed, n, d, wavy_prob,
                  [&beta](const Eigen::VectorXd& x) { return x.dot(beta); });
}

struct MeanTargets {
  double theta_g = 0.0;  // E[Y]
  double theta_t = 0.0;  // E[Y | unlabeled]
};

// Monte Carlo population means; the outcome noise integrates out, and the
// labeling enters through its conditional probability rather than draws.
// d_used covers every coordinate the callables read.
template <class PFn, class MFn>
MeanTargets mc_mean_targets(PFn label_prob, MFn cond_mean, int d_used,
                            std::uint64_t seed, std::int64_t draws = 10000000) {
  summint::Rng rng(seed);
  double sum_m = 0.0, sum_wm = 0.0, sum_w = 0.0;
  for (std::int64_t i = 0; i < draws; ++i) {
    Eigen::VectorXd x = draw_row(rng, d_used);
    const double m = cond_mean(x);
    const double w = 1.0 - label_prob(x);
    sum_m += m;
    sum_wm += w * m;
    sum_w += w;
  }
  MeanTargets t;
  t.theta_g = sum_m / static_cast<double>(draws);
  t.theta_t = sum_wm / sum_w;
  return t;
}

// Monte Carlo sigma_n^2 = gamma^{-1} Var(Y) + (1 - gamma^{-1}) Var(x'beta)
// for the correctly specified linear model under completely-random
// labeling with labeled fraction gamma.
inline double mcar_sigma_sq(int s, double gamma, double sig_eps,
                            std::uint64_t seed, std::int64_t draws = 10000000) {
  const Eigen::VectorXd beta = linear_beta(s + 1, s);
  summint::Rng rng(seed);
  double sum = 0.0, sumsq = 0.0;
  for (std::int64_t i = 0; i < draws; ++i) {
    const double lin = draw_row(rng, s + 1).dot(beta);
    sum += lin;
    sumsq += lin * lin;
  }
  const double m = sum / static_cast<double>(draws);
  const double var_lin = sumsq / static_cast<double>(draws) - m * m;
  const double var_y = var_lin + sig_eps * sig_eps;
  return var_y / gamma + (1.0 - 1.0 / gamma) * var_lin;
}

// Partially linear design: Y = x'beta + 2 sin(2 z) + eps with z uniform
// on (0, 1) and completely-random labeling. Raw external covariate rows
// are kept so the same draw can be re-summarized on the extended design
// (x, z) for the linear comparator.
struct PlmDraw {
  summint::plm::PlmDataset data;
  summint::ExternalSummary summary;
  Eigen::MatrixXd ext_x;
  double theta = 0.0;
};

inline double plm_smooth(double z) { return 2.0 * std::sin(2.0 * z); }

inline PlmDraw gen_plm(std::uint64_t seed, int n, int d, int s, double gamma,
                       double sig_eps = 1.0) {
  const Eigen::VectorXd beta = linear_beta(d, s);
  summint::Rng rng(seed);
  std::vector<Eigen::VectorXd> lab;
  std::vector<double> ys, zlab, zext;
  std::vector<Eigen::VectorXd> ext;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = draw_row(rng, d);
    const double z = rng.uniform();
    const double u = rng.uniform();
    if (u < gamma) {
      ys.push_back(x.dot(beta) + plm_smooth(z) + sig_eps * rng.normal());
      zlab.push_back(z);
      lab.push_back(std::move(x));
    } else {
      zext.push_back(z);
      ext.push_back(std::move(x));
    }
  }
  if (lab.empty() || ext.empty())
    throw std::runtime_error("gen_plm: degenerate labeling draw");
  PlmDraw out;
  out.data.base.x.resize(static_cast<Eigen::Index>(lab.size()), d);
  out.data.base.y.resize(static_cast<Eigen::Index>(lab.size()));
  out.data.z_labeled.resize(static_cast<Eigen::Index>(lab.size()), 1);
  for (std::size_t i = 0; i < lab.size(); ++i) {
    out.data.base.x.row(static_cast<Eigen::Index>(i)) = lab[i].transpose();
    out.data.base.y[static_cast<Eigen::Index>(i)] = ys[i];
    out.data.z_labeled(static_cast<Eigen::Index>(i), 0) = zlab[i];
  }
  out.ext_x.resize(static_cast<Eigen::Index>(ext.size()), d);
  out.data.z_external.resize(static_cast<Eigen::Index>(ext.size()), 1);
  for (std::size_t i = 0; i < ext.size(); ++i) {
    out.ext_x.row(static_cast<Eigen::Index>(i)) = ext[i].transpose();
    out.data.z_external(static_cast<Eigen::Index>(i), 0) = zext[i];
  }
  out.data.base.n_external = static_cast<std::int64_t>(ext.size());
  out.summary = summint::summarize_external(out.ext_x, "full");
  // E[sin(2Z)] = (1 - cos 2)/2 over the unit interval.
  out.theta = 2.0 + 2.0 * (1.0 - std::cos(2.0)) / 2.0;
  return out;
}

// The same draw viewed as a plain linear problem on the extended
// covariates w = (x, z).
struct WLinearView {
  summint::PrimaryDataset data;
  summint::ExternalSummary summary;
};

inline WLinearView to_wlinear(const PlmDraw& g) {
  WLinearView out;
  const Eigen::Index nl = g.data.base.x.rows();
  const Eigen::Index ne = g.ext_x.rows();
  const Eigen::Index d = g.data.base.x.cols();
  out.data.x.resize(nl, d + 1);
  out.data.x.leftCols(d) = g.data.base.x;
  out.data.x.col(d) = g.data.z_labeled.col(0);
  out.data.y = g.data.base.y;
  out.data.n_external = g.data.base.n_external;
  Eigen::MatrixXd ext(ne, d + 1);
  ext.leftCols(d) = g.ext_x;
  ext.col(d) = g.data.z_external.col(0);
  out.summary = summint::summarize_external(ext, "full");
  return out;
}

// Two-arm design with a constant effect delta: A ~ Bern(1/2),
// Y = x'beta + delta * A + eps, and per-arm logistic labeling whose
// non-intercept coordinates flip sign between arms. Both the
// within-population and the external-population effect equal delta.
struct CausalDraw {
  summint::PrimaryDataset data;
  summint::ExternalSummary summary;
};

inline CausalDraw gen_causal_constant_effect(std::uint64_t seed, int n, int d,
                                             int s, double delta,
                                             double alpha_n = -1.0,
                                             double sig_eps = 1.0) {
  const Eigen::VectorXd beta = linear_beta(d, s);
  const Eigen::VectorXd a1 = labeling_alpha(d, s, alpha_n);
  Eigen::VectorXd a0 = -a1;
  a0[0] = alpha_n;
  summint::Rng rng(seed);
  std::vector<Eigen::VectorXd> lab;
  std::vector<double> ys;
  std::vector<int> as;
  std::vector<Eigen::VectorXd> ext;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x = draw_row(rng, d);
    const int a = rng.uniform() < 0.5 ? 1 : 0;
    const double p = logistic(x.dot(a == 1 ? a1 : a0));
    const double u = rng.uniform();
    if (u < p) {
      ys.push_back(x.dot(beta) + delta * a + sig_eps * rng.normal());
      as.push_back(a);
      lab.push_back(std::move(x));
    } else {
      ext.push_back(std::move(x));
    }
  }
  if (lab.empty() || ext.empty())
    throw std::runtime_error("gen_causal_constant_effect: degenerate draw");
  CausalDraw out;
  out.data.x.resize(static_cast<Eigen::Index>(lab.size()), d);
  out.data.y.resize(static_cast<Eigen::Index>(lab.size()));
  Eigen::VectorXi tr(static_cast<Eigen::Index>(lab.size()));
  for (std::size_t i = 0; i < lab.size(); ++i) {
    out.data.x.row(static_cast<Eigen::Index>(i)) = lab[i].transpose();
    out.data.y[static_cast<Eigen::Index>(i)] = ys[i];
    tr[static_cast<Eigen::Index>(i)] = as[i];
  }
  out.data.treat = tr;
  Eigen::MatrixXd ext_rows(static_cast<Eigen::Index>(ext.size()), d);
  for (std::size_t i = 0; i < ext.size(); ++i)
    ext_rows.row(static_cast<Eigen::Index>(i)) = ext[i].transpose();
  out.data.n_external = static_cast<std::int64_t>(ext.size());
  out.summary = summint::summarize_external(ext_rows, "full");
  return out;
}

// Bisection on the labeling intercept so the marginal labeled fraction of
// logistic(alpha_n + x'alpha_slopes) hits the target; shared covariate
// draws keep the objective monotone in alpha_n.
inline double calibrate_logistic_intercept(int d, int s, double target,
                                           std::uint64_t seed,
                                           std::int64_t draws = 1000000) {
  const Eigen::VectorXd slopes = labeling_alpha(d, s, 0.0);
  summint::Rng rng(seed);
  std::vector<double> dots(static_cast<std::size_t>(draws));
  const int d_used = s + 1;
  for (auto& v : dots) {
    double acc = 0.0;
    for (int j = 1; j < d_used; ++j) acc += slopes[j] * rng.truncated_normal();
    v = acc;
  }
  auto marginal = [&](double an) {
    double p = 0.0;
    for (double v : dots) p += logistic(an + v);
    return p / static_cast<double>(draws);
  };
  double lo = -20.0, hi = 20.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (marginal(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace dgps
