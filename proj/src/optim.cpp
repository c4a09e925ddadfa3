#include "summint/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "summint/rng.hpp"

namespace summint::optim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double soft(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double l1_penalty(const Eigen::VectorXd& b, double lambda, bool pen_intercept) {
  if (lambda == 0.0) return 0.0;
  double s = b.lpNorm<1>();
  if (!pen_intercept) s -= std::abs(b[0]);
  return lambda * s;
}

std::vector<int> support_of(const Eigen::VectorXd& b) {
  std::vector<int> s;
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (b[j] != 0.0) s.push_back(static_cast<int>(j));
  return s;
}

// Composite stationarity violation at one coordinate.
double kkt_coord(double g, double bj, double lam) {
  if (lam == 0.0) return std::abs(g);
  if (bj != 0.0) return std::abs(g + lam * (bj > 0 ? 1.0 : -1.0));
  return std::max(std::abs(g) - lam, 0.0);
}

void check_quad(const QuadProblem& p) {
  if (p.x.rows() != p.y.size() || p.x.rows() != p.weights.size())
    throw std::invalid_argument("quad problem: row/response/weight size mismatch");
  if (p.x.rows() == 0) throw std::invalid_argument("quad problem: no rows");
  if (!(p.normalizer > 0.0)) throw std::invalid_argument("quad problem: normalizer must be positive");
  if (p.lambda < 0.0) throw std::invalid_argument("quad problem: negative lambda");
  if ((p.weights.array() < 0.0).any())
    throw std::invalid_argument("quad problem: negative weight");
  if (!p.y.allFinite() || !p.x.allFinite() || !p.weights.allFinite())
    throw std::invalid_argument("quad problem: non-finite input");
}

void check_tilt(const TiltProblem& p) {
  if (p.exp_rows.rows() == 0)
    throw std::runtime_error(
        "tilt problem: unbounded propensity loss (empty exponential sum: no "
        "labeled rows oppose the linear term)");
  if (p.exp_rows.cols() != p.linear.size())
    throw std::invalid_argument("tilt problem: linear/design dimension mismatch");
  if (!(p.normalizer > 0.0)) throw std::invalid_argument("tilt problem: normalizer must be positive");
  if (p.lambda < 0.0) throw std::invalid_argument("tilt problem: negative lambda");
  if (!p.linear.allFinite() || !p.exp_rows.allFinite())
    throw std::invalid_argument("tilt problem: non-finite input");
}

}  // namespace

double quad_objective(const QuadProblem& p, const Eigen::VectorXd& beta) {
  Eigen::VectorXd r = p.y - p.x * beta;
  double loss = (p.weights.array() * r.array().square()).sum() / p.normalizer;
  return loss + l1_penalty(beta, p.lambda, p.penalize_intercept);
}

double tilt_objective(const TiltProblem& p, const Eigen::VectorXd& alpha) {
  double s = (-(p.exp_rows * alpha).array()).exp().sum() / p.normalizer;
  return p.linear.dot(alpha) + s + l1_penalty(alpha, p.lambda, p.penalize_intercept);
}

PenalizedFit solve_lasso(const QuadProblem& p, const SolveOptions& opts,
                         const Eigen::VectorXd* warm) {
  check_quad(p);
  const Eigen::Index d = p.x.cols();
  const double N = p.normalizer;

  Eigen::VectorXd b = (warm && warm->size() == d) ? *warm : Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd wx = p.weights.asDiagonal() * p.x;
  Eigen::VectorXd curv(d);  // a_j = (2/N) sum_i w_i x_ij^2
  for (Eigen::Index j = 0; j < d; ++j) curv[j] = 2.0 / N * p.x.col(j).dot(wx.col(j));
  Eigen::VectorXd r = p.y - p.x * b;

  auto lam_of = [&](Eigen::Index j) {
    return (j == 0 && !p.penalize_intercept) ? 0.0 : p.lambda;
  };

  PenalizedFit fit;
  fit.lambda = p.lambda;

  // One pass over `idx`; returns the largest curvature-scaled move.
  auto sweep = [&](const auto& idx) {
    double move = 0.0;
    for (int j : idx) {
      const double lj = lam_of(j);
      const double cj = 2.0 / N * wx.col(j).dot(r);  // -grad_j
      if (curv[j] == 0.0) {
        if (std::abs(cj) > lj + 1e-12)
          throw std::runtime_error("solve_lasso: degenerate column " + std::to_string(j) +
                                   " (zero weighted curvature, nonzero gradient)");
        if (lj > 0.0 && b[j] != 0.0) {  // free coordinate: only the penalty cares
          r += b[j] * p.x.col(j);
          b[j] = 0.0;
        }
        continue;
      }
      const double nb = soft(cj + curv[j] * b[j], lj) / curv[j];
      const double delta = nb - b[j];
      if (delta != 0.0) {
        b[j] = nb;
        r -= delta * p.x.col(j);
        move = std::max(move, std::sqrt(curv[j]) * std::abs(delta));
      }
    }
    return move;
  };

  auto kkt_full = [&]() {
    r = p.y - p.x * b;  // refresh incremental drift
    Eigen::VectorXd c = 2.0 / N * (wx.transpose() * r);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
      worst = std::max(worst, kkt_coord(-c[j], b[j], lam_of(j)));
    return worst;
  };

  std::vector<int> all(d);
  for (Eigen::Index j = 0; j < d; ++j) all[static_cast<std::size_t>(j)] = static_cast<int>(j);

  int sweeps = 0;
  double kr = kInf;
  for (;;) {
    sweep(all);
    ++sweeps;
    if (opts.record_trace) fit.objective_trace.push_back(quad_objective(p, b));
    // settle the active set before paying for another full pass
    while (sweeps < opts.max_iter) {
      std::vector<int> act = support_of(b);
      if (!p.penalize_intercept &&
          std::find(act.begin(), act.end(), 0) == act.end())
        act.insert(act.begin(), 0);
      double mv = sweep(act);
      ++sweeps;
      if (opts.record_trace) fit.objective_trace.push_back(quad_objective(p, b));
      if (mv <= 0.01 * opts.tol) break;
    }
    kr = kkt_full();
    if (kr <= opts.tol || sweeps >= opts.max_iter) break;
  }

  fit.beta = b;
  fit.support = support_of(b);
  fit.objective = quad_objective(p, b);
  fit.kkt_residual = kr;
  fit.iterations = sweeps;
  fit.converged = kr <= opts.tol;
  return fit;
}

double lambda_max(const QuadProblem& p) {
  check_quad(p);
  const Eigen::Index d = p.x.cols();
  Eigen::VectorXd b0 = Eigen::VectorXd::Zero(d);
  if (!p.penalize_intercept) {
    Eigen::VectorXd w0 = p.weights.cwiseProduct(p.x.col(0));
    double den = w0.dot(p.x.col(0));
    if (den <= 0.0)
      throw std::invalid_argument("lambda_max: zero weight mass on the intercept");
    b0[0] = w0.dot(p.y) / den;
  }
  Eigen::VectorXd r = p.y - p.x * b0;
  Eigen::VectorXd c = 2.0 / p.normalizer *
                      (p.x.transpose() * p.weights.cwiseProduct(r).eval());
  double lm = 0.0;
  for (Eigen::Index j = (p.penalize_intercept ? 0 : 1); j < d; ++j)
    lm = std::max(lm, std::abs(c[j]));
  return lm;
}

PenalizedFit solve_tilt(const TiltProblem& p, const SolveOptions& opts,
                        const Eigen::VectorXd* warm) {
  check_tilt(p);
  const Eigen::Index d = p.linear.size();
  const Eigen::Index R = p.exp_rows.rows();
  const double M = p.normalizer;

  Eigen::VectorXd a = (warm && warm->size() == d) ? *warm : Eigen::VectorXd::Zero(d);
  Eigen::VectorXd xa = p.exp_rows * a;

  PenalizedFit fit;
  fit.lambda = p.lambda;

  auto lam_of = [&](Eigen::Index j) {
    return (j == 0 && !p.penalize_intercept) ? 0.0 : p.lambda;
  };

  // A direction the exponential sum never sees, with a linear term the
  // penalty cannot hold back, makes the loss unbounded below.
  for (Eigen::Index j = 0; j < d; ++j)
    if (p.exp_rows.col(j).cwiseAbs().maxCoeff() == 0.0 &&
        std::abs(p.linear[j]) > lam_of(j))
      throw std::runtime_error(
          "solve_tilt: unbounded propensity loss along coordinate " +
          std::to_string(j) +
          " (the exponential sum never sees this direction)");

  // Clamped exponential weights; the clamp never feeds the final KKT check.
  auto weights_at = [&](const Eigen::VectorXd& xa_) -> Eigen::ArrayXd {
    Eigen::ArrayXd t = -xa_.array();
    if ((t.abs() > opts.exp_clamp).any()) {
      fit.clamped = true;
      t = t.min(opts.exp_clamp).max(-opts.exp_clamp);
    }
    return t.exp();
  };

  Eigen::ArrayXd ew = weights_at(xa);

  std::vector<char> in_ws(static_cast<std::size_t>(d), 0);
  std::vector<int> ws;
  auto add_ws = [&](int j) {
    if (!in_ws[static_cast<std::size_t>(j)]) {
      in_ws[static_cast<std::size_t>(j)] = 1;
      ws.push_back(j);
    }
  };
  if (!p.penalize_intercept) add_ws(0);
  for (int j : support_of(a)) add_ws(j);
  if (ws.empty()) add_ws(0);

  double step = 1.0;
  int iters = 0;
  double kr = kInf;

  auto smooth_full = [&](const Eigen::ArrayXd& w, const Eigen::VectorXd& a_) {
    return p.linear.dot(a_) + w.sum() / M;
  };

  for (;;) {
    // proximal descent restricted to the working set
    Eigen::MatrixXd xw(R, static_cast<Eigen::Index>(ws.size()));
    Eigen::VectorXd vw(static_cast<Eigen::Index>(ws.size()));
    for (std::size_t c = 0; c < ws.size(); ++c) {
      xw.col(static_cast<Eigen::Index>(c)) = p.exp_rows.col(ws[c]);
      vw[static_cast<Eigen::Index>(c)] = p.linear[ws[c]];
    }
    Eigen::VectorXd aw(static_cast<Eigen::Index>(ws.size()));
    for (std::size_t c = 0; c < ws.size(); ++c) aw[static_cast<Eigen::Index>(c)] = a[ws[c]];

    bool stalled = false;
    while (iters < opts.max_prox_iter) {
      Eigen::VectorXd gw = vw - (xw.transpose() * ew.matrix()) / M;
      double wk = 0.0;
      for (std::size_t c = 0; c < ws.size(); ++c)
        wk = std::max(wk, kkt_coord(gw[static_cast<Eigen::Index>(c)],
                                    aw[static_cast<Eigen::Index>(c)], lam_of(ws[c])));
      if (wk <= opts.tol) break;

      const double f0 = smooth_full(ew, a);
      Eigen::VectorXd cw, xa_cand;
      Eigen::ArrayXd ew_cand;
      bool backtracked = false;
      for (;;) {
        cw = aw - step * gw;
        for (std::size_t c = 0; c < ws.size(); ++c) {
          double lj = lam_of(ws[c]);
          if (lj > 0.0)
            cw[static_cast<Eigen::Index>(c)] = soft(cw[static_cast<Eigen::Index>(c)], step * lj);
        }
        Eigen::VectorXd dw = cw - aw;
        xa_cand = xa + xw * dw;
        ew_cand = weights_at(xa_cand);
        double lin_delta = vw.dot(dw);
        double f_cand = f0 + lin_delta + (ew_cand.sum() - ew.sum()) / M;
        double bound = f0 + gw.dot(dw) + dw.squaredNorm() / (2.0 * step);
        if (f_cand <= bound + 1e-12 * (1.0 + std::abs(bound))) break;
        step *= 0.5;
        backtracked = true;
        if (step < 1e-18) { stalled = true; break; }
      }
      if (stalled) break;

      aw = cw;
      for (std::size_t c = 0; c < ws.size(); ++c) a[ws[c]] = aw[static_cast<Eigen::Index>(c)];
      xa = xa_cand;
      ew = ew_cand;
      ++iters;
      if (!backtracked) step = std::min(step * 1.25, 1e10);
      if (opts.record_trace)
        fit.objective_trace.push_back(smooth_full(ew, a) +
                                      l1_penalty(a, p.lambda, p.penalize_intercept));
      if (a.lpNorm<Eigen::Infinity>() > opts.iterate_bound)
        throw std::runtime_error(
            "solve_tilt: iterates diverged; the propensity loss is likely unbounded "
            "(no mass opposing the exponential direction)");
    }

    // certify against every coordinate, not just the working set
    Eigen::VectorXd g = p.linear - (p.exp_rows.transpose() * ew.matrix()) / M;
    kr = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
      kr = std::max(kr, kkt_coord(g[j], a[j], lam_of(j)));
    if (kr <= opts.tol || iters >= opts.max_prox_iter || stalled) break;

    bool grew = false;
    for (Eigen::Index j = 0; j < d; ++j)
      if (!in_ws[static_cast<std::size_t>(j)] &&
          kkt_coord(g[j], a[j], lam_of(j)) > opts.tol) {
        add_ws(static_cast<int>(j));
        grew = true;
      }
    if (!grew) break;
  }

  // Honest final residual: raw exponents, drift-free product.
  xa = p.exp_rows * a;
  Eigen::ArrayXd raw = (-xa.array()).exp();
  Eigen::VectorXd g = p.linear - (p.exp_rows.transpose() * raw.matrix()) / M;
  double kr_raw = 0.0;
  for (Eigen::Index j = 0; j < d; ++j)
    kr_raw = std::max(kr_raw, kkt_coord(g[j], a[j], lam_of(j)));

  fit.beta = a;
  fit.support = support_of(a);
  fit.objective = tilt_objective(p, a);
  fit.kkt_residual = kr_raw;
  fit.iterations = iters;
  fit.converged = std::isfinite(kr_raw) && kr_raw <= opts.tol;
  return fit;
}

double lambda_max(const TiltProblem& p) {
  check_tilt(p);
  const Eigen::Index d = p.linear.size();
  Eigen::VectorXd a0 = Eigen::VectorXd::Zero(d);
  if (!p.penalize_intercept && p.linear[0] > 0.0 &&
      (p.exp_rows.col(0).array() == 1.0).all()) {
    a0[0] = std::log(static_cast<double>(p.exp_rows.rows()) /
                     (p.linear[0] * p.normalizer));
  }
  Eigen::ArrayXd e = (-(p.exp_rows * a0).array()).exp();
  Eigen::VectorXd g = p.linear - (p.exp_rows.transpose() * e.matrix()) / p.normalizer;
  double lm = 0.0;
  for (Eigen::Index j = (p.penalize_intercept ? 0 : 1); j < d; ++j)
    lm = std::max(lm, std::abs(g[j]));
  return lm;
}

std::vector<double> default_grid(double lam_max, int points, double ratio) {
  if (points < 1) throw std::invalid_argument("default_grid: need at least one point");
  if (!(lam_max > 0.0)) return {0.0};
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("default_grid: ratio must lie in (0,1)");
  std::vector<double> g(static_cast<std::size_t>(points));
  if (points == 1) {
    g[0] = lam_max;
    return g;
  }
  const double lstep = std::log(ratio) / static_cast<double>(points - 1);
  for (int i = 0; i < points; ++i)
    g[static_cast<std::size_t>(i)] = lam_max * std::exp(lstep * i);
  return g;
}

namespace {

// Row-subset adapters so one CV routine serves both problem shapes. The
// normalizer scales with the retained row fraction: rows stand in for a
// fixed share of the implicit full sample.

struct QuadAdapter {
  using Problem = QuadProblem;
  static Eigen::Index rows(const Problem& p) { return p.x.rows(); }
  static Problem subset(const Problem& p, const std::vector<int>& idx) {
    Problem s;
    s.x.resize(static_cast<Eigen::Index>(idx.size()), p.x.cols());
    s.y.resize(static_cast<Eigen::Index>(idx.size()));
    s.weights.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      s.x.row(static_cast<Eigen::Index>(i)) = p.x.row(idx[i]);
      s.y[static_cast<Eigen::Index>(i)] = p.y[idx[i]];
      s.weights[static_cast<Eigen::Index>(i)] = p.weights[idx[i]];
    }
    s.normalizer = p.normalizer * static_cast<double>(idx.size()) /
                   static_cast<double>(p.x.rows());
    s.penalize_intercept = p.penalize_intercept;
    return s;
  }
  static PenalizedFit fit(const Problem& p, const SolveOptions& o,
                          const Eigen::VectorXd* warm) {
    return solve_lasso(p, o, warm);
  }
  static double heldout(const Problem& held, const Eigen::VectorXd& beta) {
    Eigen::VectorXd r = held.y - held.x * beta;
    return (held.weights.array() * r.array().square()).sum() / held.normalizer;
  }
};

struct TiltAdapter {
  using Problem = TiltProblem;
  static Eigen::Index rows(const Problem& p) { return p.exp_rows.rows(); }
  static Problem subset(const Problem& p, const std::vector<int>& idx) {
    Problem s;
    s.linear = p.linear;  // scale-free in the row fraction
    s.exp_rows.resize(static_cast<Eigen::Index>(idx.size()), p.exp_rows.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      s.exp_rows.row(static_cast<Eigen::Index>(i)) = p.exp_rows.row(idx[i]);
    s.normalizer = p.normalizer * static_cast<double>(idx.size()) /
                   static_cast<double>(p.exp_rows.rows());
    s.penalize_intercept = p.penalize_intercept;
    return s;
  }
  static PenalizedFit fit(const Problem& p, const SolveOptions& o,
                          const Eigen::VectorXd* warm) {
    return solve_tilt(p, o, warm);
  }
  static double heldout(const Problem& held, const Eigen::VectorXd& alpha) {
    double s = (-(held.exp_rows * alpha).array()).exp().sum() / held.normalizer;
    return held.linear.dot(alpha) + s;
  }
};

template <class A>
CvResult cv_impl(const typename A::Problem& p, int K_cv,
                 const std::vector<double>& grid, std::uint64_t seed,
                 const SolveOptions& opts) {
  if (K_cv < 2) throw std::invalid_argument("cross_validate: need at least 2 folds");
  if (grid.empty()) throw std::invalid_argument("cross_validate: empty grid");
  const Eigen::Index R = A::rows(p);
  if (R < K_cv)
    throw std::invalid_argument("cross_validate: fewer rows than CV folds");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] > grid[i - 1])
      throw std::invalid_argument("cross_validate: grid must be descending");

  std::vector<int> perm(static_cast<std::size_t>(R));
  for (Eigen::Index i = 0; i < R; ++i) perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
  Rng rng(derive_seed(seed, 0xcf01d));
  rng.shuffle(perm);

  SolveOptions inner = opts;
  inner.record_trace = false;

  const std::size_t G = grid.size();
  Eigen::MatrixXd losses = Eigen::MatrixXd::Constant(K_cv, static_cast<Eigen::Index>(G), kInf);
  std::vector<char> fold_ok(static_cast<std::size_t>(K_cv), 1);

  std::int64_t base = R / K_cv, extra = R % K_cv, at = 0;
  for (int f = 0; f < K_cv; ++f) {
    std::int64_t len = base + (f < extra ? 1 : 0);
    std::vector<int> held(perm.begin() + at, perm.begin() + at + len);
    std::vector<int> rest;
    rest.reserve(perm.size() - held.size());
    rest.insert(rest.end(), perm.begin(), perm.begin() + at);
    rest.insert(rest.end(), perm.begin() + at + len, perm.end());
    at += len;

    typename A::Problem fitp = A::subset(p, rest);
    typename A::Problem heldp = A::subset(p, held);
    bool have_warm = false;
    Eigen::VectorXd wbeta;
    for (std::size_t gi = 0; gi < G; ++gi) {
      fitp.lambda = grid[gi];
      PenalizedFit fit;
      try {
        fit = A::fit(fitp, inner, have_warm ? &wbeta : nullptr);
      } catch (const std::exception&) {
        fold_ok[static_cast<std::size_t>(f)] = 0;
        break;
      }
      wbeta = fit.beta;
      have_warm = true;
      double hl = A::heldout(heldp, fit.beta);
      losses(f, static_cast<Eigen::Index>(gi)) = std::isfinite(hl) ? hl : kInf;
    }
  }

  CvResult res;
  res.grid = grid;
  res.mean_loss.assign(G, kInf);
  int usable = 0;
  for (int f = 0; f < K_cv; ++f) usable += fold_ok[static_cast<std::size_t>(f)];
  if (usable == 0)
    throw std::runtime_error("cross_validate: every fold failed to fit");
  res.usable_folds = usable;
  for (std::size_t gi = 0; gi < G; ++gi) {
    double s = 0.0;
    for (int f = 0; f < K_cv; ++f)
      if (fold_ok[static_cast<std::size_t>(f)]) s += losses(f, static_cast<Eigen::Index>(gi));
    res.mean_loss[gi] = s / usable;
  }
  std::size_t best = 0;
  for (std::size_t gi = 1; gi < G; ++gi)
    if (res.mean_loss[gi] < res.mean_loss[best]) best = gi;  // ties keep larger lambda
  res.lambda = grid[best];
  return res;
}

}  // namespace

CvResult cross_validate(const QuadProblem& p, int K_cv,
                        const std::vector<double>& grid, std::uint64_t seed,
                        const SolveOptions& opts) {
  return cv_impl<QuadAdapter>(p, K_cv, grid, seed, opts);
}

CvResult cross_validate(const TiltProblem& p, int K_cv,
                        const std::vector<double>& grid, std::uint64_t seed,
                        const SolveOptions& opts) {
  return cv_impl<TiltAdapter>(p, K_cv, grid, seed, opts);
}

namespace {

template <class P>
double choose_impl(const P& p, const LambdaRule& rule, std::uint64_t seed,
                   const SolveOptions& opts, double theory_lambda) {
  switch (rule.kind) {
    case LambdaRule::Kind::fixed:
      if (rule.value < 0.0) throw std::invalid_argument("lambda rule: negative fixed lambda");
      return rule.value;
    case LambdaRule::Kind::theory:
      if (theory_lambda < 0.0) throw std::invalid_argument("lambda rule: negative theory lambda");
      return theory_lambda;
    case LambdaRule::Kind::cv: {
      double lm = lambda_max(p);
      std::vector<double> grid = default_grid(lm, rule.grid_points, rule.grid_ratio);
      if (grid.size() == 1) return grid[0];
      return cross_validate(p, rule.cv_folds, grid, seed, opts).lambda;
    }
  }
  throw std::logic_error("lambda rule: unknown kind");
}

}  // namespace

double choose_lambda(const QuadProblem& p, const LambdaRule& rule, std::uint64_t seed,
                     const SolveOptions& opts, double theory_lambda) {
  return choose_impl(p, rule, seed, opts, theory_lambda);
}

double choose_lambda(const TiltProblem& p, const LambdaRule& rule, std::uint64_t seed,
                     const SolveOptions& opts, double theory_lambda) {
  return choose_impl(p, rule, seed, opts, theory_lambda);
}

}  // namespace summint::optim
