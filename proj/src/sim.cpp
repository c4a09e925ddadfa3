#include "summint/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include "json.hpp"
#include "summint/causal.hpp"
#include "summint/parallel.hpp"
#include "summint/rng.hpp"
#include "summint/stats.hpp"

namespace summint::sim {

namespace {

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

constexpr double kTruncCut = 2.0;

}  // namespace

void Scenario::validate() const {
  if (dgp != "a" && dgp != "b")
    throw std::invalid_argument("scenario: dgp must be \"a\" or \"b\"");
  if (n < 2) throw std::invalid_argument("scenario: n must be at least 2");
  if (s_alpha < 1)
    throw std::invalid_argument("scenario: s_alpha must be at least 1");
  if (s_beta < 1)
    throw std::invalid_argument("scenario: s_beta must be at least 1");
  if (d < s_alpha + 2)
    throw std::invalid_argument("scenario: d must be at least s_alpha + 2");
  if (d < s_beta + 2)
    throw std::invalid_argument("scenario: d must be at least s_beta + 2");
  if (!(gamma_target > 0.0 && gamma_target < 1.0))
    throw std::invalid_argument("scenario: gamma_target must lie in (0, 1)");
  if (reps < 1) throw std::invalid_argument("scenario: reps must be positive");
}

Eigen::VectorXd alpha_star(int arm, Eigen::Index d, int s_alpha,
                           double alpha_n) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("alpha_star: arm must be 0 or 1");
  if (s_alpha < 1 || d < s_alpha + 1)
    throw std::invalid_argument("alpha_star: need d > s_alpha >= 1");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  const double sign = arm == 1 ? 1.0 : -1.0;
  v[0] = alpha_n;
  v[1] = sign;
  for (int j = 2; j <= s_alpha; ++j) v[j] = sign / (s_alpha - 1);
  return v;
}

Eigen::VectorXd beta_star(int arm, Eigen::Index d, int s_beta) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("beta_star: arm must be 0 or 1");
  if (s_beta < 1 || d < s_beta + 1)
    throw std::invalid_argument("beta_star: need d > s_beta >= 1");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  const double sign = arm == 1 ? 1.0 : -1.0;
  v[0] = sign * 3.0;
  v[1] = sign * 3.0;
  for (int j = 2; j <= s_beta; ++j)
    v[j] = sign * 3.0 / std::sqrt(static_cast<double>(s_beta - 1));
  return v;
}

Eigen::VectorXd v_star(int arm, Eigen::Index d, int s_beta) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("v_star: arm must be 0 or 1");
  if (s_beta < 1 || d < s_beta + 1)
    throw std::invalid_argument("v_star: need d > s_beta >= 1");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  const double sign = arm == 1 ? 1.0 : -1.0;
  v[0] = sign * -12.0;
  v[1] = sign * 0.5;
  for (int j = 2; j <= s_beta; ++j)
    v[j] = sign * 0.5 / (s_beta - 1);
  return v;
}

double truncated_normal_variance(double cut) {
  if (!(cut > 0.0))
    throw std::invalid_argument("truncated_normal_variance: cut must be positive");
  const double phi = std::exp(-0.5 * cut * cut) / std::sqrt(2.0 * M_PI);
  const double mass = 2.0 * normal_cdf(cut) - 1.0;
  return 1.0 - 2.0 * cut * phi / mass;
}

namespace {

// Conditional labeling probability and treatment-assignment probability at
// one covariate row, given the propensity linear parts eta1 = x'alpha_1 and
// eta0 = x'alpha_0 and (for design "a") the first non-intercept coordinate.
struct UnitProbs {
  double p_treat;
  double p_label_given_a1;
  double p_label_given_a0;
  double p_label;  // marginal over treatment
};

UnitProbs unit_probs(bool dgp_a, double x1, double eta1, double eta0) {
  UnitProbs u{};
  const double g1 = logistic(eta1);
  const double g0 = logistic(eta0);
  if (dgp_a) {
    u.p_treat = 0.3 * std::sin(x1) + 0.5;
    u.p_label_given_a1 = g1;
    u.p_label_given_a0 = g0;
    u.p_label = u.p_treat * g1 + (1.0 - u.p_treat) * g0;
  } else {
    u.p_treat = 0.5 * (g1 - g0 + 1.0);
    u.p_label_given_a1 =
        u.p_treat > 0.0 ? std::min(g1 / u.p_treat, 1.0) : 0.0;
    u.p_label_given_a0 =
        u.p_treat < 1.0 ? std::min(g0 / (1.0 - u.p_treat), 1.0) : 0.0;
    u.p_label = std::min(g1 + g0, 1.0);
  }
  return u;
}

}  // namespace

GenOutput gen_dgp(const Scenario& sc, double alpha_n, std::int64_t rep_index) {
  sc.validate();
  if (rep_index < 0)
    throw std::invalid_argument("gen_dgp: rep_index must be nonnegative");
  const bool dgp_a = sc.dgp == "a";
  const Eigen::VectorXd a1 = alpha_star(1, sc.d, sc.s_alpha, alpha_n);
  const Eigen::VectorXd a0 = alpha_star(0, sc.d, sc.s_alpha, alpha_n);
  const Eigen::VectorXd b1 = beta_star(1, sc.d, sc.s_beta);
  const Eigen::VectorXd b0 = beta_star(0, sc.d, sc.s_beta);
  Eigen::VectorXd q1, q0;
  if (!dgp_a) {
    q1 = v_star(1, sc.d, sc.s_beta);
    q0 = v_star(0, sc.d, sc.s_beta);
  }

  Rng rng(derive_seed(sc.seed, 0xd67au, static_cast<std::uint64_t>(rep_index)));

  Eigen::MatrixXd lab_x(sc.n, sc.d);
  Eigen::MatrixXd ext_x(sc.n, sc.d);
  Eigen::VectorXd lab_y(sc.n);
  Eigen::VectorXi lab_a(sc.n);
  Eigen::Index n_lab = 0, n_ext = 0;
  double diff_all = 0.0, diff_ext = 0.0;

  Eigen::VectorXd x(sc.d), xsq;
  if (!dgp_a) xsq.resize(sc.d);
  for (Eigen::Index i = 0; i < sc.n; ++i) {
    x[0] = 1.0;
    for (Eigen::Index j = 1; j < sc.d; ++j) x[j] = rng.truncated_normal(kTruncCut);
    const UnitProbs u = unit_probs(dgp_a, x[1], x.dot(a1), x.dot(a0));
    const bool treated = rng.uniform() < u.p_treat;
    const double p_gamma = treated ? u.p_label_given_a1 : u.p_label_given_a0;
    const bool labeled = rng.uniform() < p_gamma;
    const double eps = rng.normal();
    double mu1, mu0;
    if (dgp_a) {
      mu1 = x.dot(b1);
      mu0 = x.dot(b0);
    } else {
      xsq = x.cwiseProduct(x);
      mu1 = 5.0 * x.dot(b1) + xsq.dot(q1);
      mu0 = 5.0 * x.dot(b0) + xsq.dot(q0);
    }
    const double diff = mu1 - mu0;  // the shared noise cancels exactly
    diff_all += diff;
    if (labeled) {
      lab_x.row(n_lab) = x.transpose();
      lab_y[n_lab] = (treated ? mu1 : mu0) + eps;
      lab_a[n_lab] = treated ? 1 : 0;
      ++n_lab;
    } else {
      ext_x.row(n_ext) = x.transpose();
      diff_ext += diff;
      ++n_ext;
    }
  }
  if (n_lab == 0)
    throw std::runtime_error("gen_dgp: replication produced no labeled units");
  if (n_ext == 0)
    throw std::runtime_error("gen_dgp: replication produced no unlabeled units");

  GenOutput out;
  out.data.x = lab_x.topRows(n_lab);
  out.data.y = lab_y.head(n_lab);
  out.data.treat = lab_a.head(n_lab);
  out.data.n_external = n_ext;
  out.summary = summarize_external(ext_x.topRows(n_ext), "full");
  out.truth.mean_diff_all = diff_all / static_cast<double>(sc.n);
  out.truth.mean_diff_external = diff_ext / static_cast<double>(n_ext);
  out.truth.n_labeled = n_lab;
  out.truth.n_external = n_ext;
  out.data.validate();
  return out;
}

double calibrate_labeling(const std::function<double(double)>& prob,
                          const std::function<double(double)>& se_of_prob,
                          double target, double tol) {
  if (!(tol > 0.0))
    throw std::invalid_argument("calibrate_labeling: tol must be positive");
  double lo = -20.0, hi = 20.0;
  const double p_lo = prob(lo), p_hi = prob(hi);
  if (p_lo > target || p_hi < target)
    throw std::runtime_error(
        "calibrate_labeling: bracket failure, P(" + std::to_string(lo) +
        ") = " + std::to_string(p_lo) + " and P(" + std::to_string(hi) +
        ") = " + std::to_string(p_hi) + " do not enclose target " +
        std::to_string(target));
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    mid = 0.5 * (lo + hi);
    if (prob(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  mid = 0.5 * (lo + hi);
  const double p_mid = prob(mid);
  const double se = se_of_prob(mid);
  if (std::abs(p_mid - target) > std::max(tol, 3.0 * se))
    throw std::runtime_error(
        "calibrate_labeling: converged intercept misses the target, |" +
        std::to_string(p_mid) + " - " + std::to_string(target) + "| > max(" +
        std::to_string(tol) + ", 3 * " + std::to_string(se) + ")");
  return mid;
}

namespace {

constexpr std::int64_t kCalibrationDraws = 1000000;

struct CalibrationSample {
  // Per draw: the non-intercept propensity linear part for arm 1 (arm 0 is
  // its negation) and the first non-intercept coordinate.
  std::vector<double> u;
  std::vector<double> x1;
};

CalibrationSample draw_calibration_sample(const std::string& dgp,
                                          Eigen::Index d, int s_alpha) {
  CalibrationSample s;
  s.u.resize(kCalibrationDraws);
  s.x1.resize(kCalibrationDraws);
  Rng rng(derive_seed(0xca11bu, static_cast<std::uint64_t>(d),
                      static_cast<std::uint64_t>(s_alpha) * 2 +
                          (dgp == "a" ? 0 : 1)));
  const double block = s_alpha > 1 ? 1.0 / (s_alpha - 1) : 0.0;
  for (std::int64_t i = 0; i < kCalibrationDraws; ++i) {
    double first = rng.truncated_normal(kTruncCut);
    double u = first;  // coefficient 1 on the first non-intercept coordinate
    for (int j = 2; j <= s_alpha; ++j) u += block * rng.truncated_normal(kTruncCut);
    s.u[i] = u;
    s.x1[i] = first;
  }
  return s;
}

double marginal_label_prob(const CalibrationSample& s, bool dgp_a,
                           double alpha_n, double* se_out) {
  double acc = 0.0, acc2 = 0.0;
  const std::int64_t n = static_cast<std::int64_t>(s.u.size());
  for (std::int64_t i = 0; i < n; ++i) {
    const double p =
        unit_probs(dgp_a, s.x1[i], alpha_n + s.u[i], alpha_n - s.u[i]).p_label;
    acc += p;
    acc2 += p * p;
  }
  const double m = acc / static_cast<double>(n);
  if (se_out) {
    const double var = std::max(acc2 / static_cast<double>(n) - m * m, 0.0);
    *se_out = std::sqrt(var / static_cast<double>(n));
  }
  return m;
}

}  // namespace

double calibrate_alpha_n(const std::string& dgp, double gamma_target,
                         Eigen::Index d, int s_alpha, double tol) {
  if (dgp != "a" && dgp != "b")
    throw std::invalid_argument("calibrate_alpha_n: dgp must be \"a\" or \"b\"");
  if (!(gamma_target > 0.0 && gamma_target < 1.0))
    throw std::invalid_argument(
        "calibrate_alpha_n: gamma_target must lie in (0, 1)");
  if (s_alpha < 1 || d < s_alpha + 1)
    throw std::invalid_argument("calibrate_alpha_n: need d > s_alpha >= 1");

  using Key = std::tuple<std::string, Eigen::Index, int, double>;
  static std::map<Key, double> cache;
  static std::mutex mutex;
  const Key key{dgp, d, s_alpha, gamma_target};
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }

  const CalibrationSample sample = draw_calibration_sample(dgp, d, s_alpha);
  const bool dgp_a = dgp == "a";
  auto prob = [&](double a) {
    return marginal_label_prob(sample, dgp_a, a, nullptr);
  };
  auto se = [&](double a) {
    double s = 0.0;
    marginal_label_prob(sample, dgp_a, a, &s);
    return s;
  };
  const double root = calibrate_labeling(prob, se, gamma_target, tol);

  std::lock_guard<std::mutex> lock(mutex);
  cache.emplace(key, root);
  return root;
}

double true_tau(const std::string& dgp, bool transport, Eigen::Index d,
                int s_alpha, int s_beta, double alpha_n, std::int64_t draws) {
  if (dgp != "a" && dgp != "b")
    throw std::invalid_argument("true_tau: dgp must be \"a\" or \"b\"");
  if (draws < 1) throw std::invalid_argument("true_tau: draws must be positive");
  if (s_alpha < 1 || s_beta < 1 || d < s_alpha + 1 || d < s_beta + 1)
    throw std::invalid_argument("true_tau: need d > s_alpha, s_beta >= 1");

  using Key = std::tuple<std::string, bool, Eigen::Index, int, int, double,
                         std::int64_t>;
  static std::map<Key, double> cache;
  static std::mutex mutex;
  const Key key{dgp, transport, d, s_alpha, s_beta, alpha_n, draws};
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }

  const bool dgp_a = dgp == "a";
  const int mc = std::max(s_alpha, s_beta);  // highest covariate index needed
  const double ablock = s_alpha > 1 ? 1.0 / (s_alpha - 1) : 0.0;
  const double bblock =
      s_beta > 1 ? 3.0 / std::sqrt(static_cast<double>(s_beta - 1)) : 0.0;
  const double qblock = s_beta > 1 ? 0.5 / (s_beta - 1) : 0.0;

  // The coordinates are iid, so only those carrying nonzero design weight
  // need to be drawn; the rest integrate out of both the contrast and the
  // labeling probability.
  Rng rng(derive_seed(0x07ac1eu,
                      static_cast<std::uint64_t>(d) * 1024 +
                          static_cast<std::uint64_t>(s_alpha) * 32 +
                          static_cast<std::uint64_t>(s_beta) * 2 +
                          (transport ? 1 : 0),
                      splitmix64(static_cast<std::uint64_t>(dgp_a) ^
                                 std::hash<double>{}(alpha_n))));
  std::vector<double> x(static_cast<std::size_t>(mc) + 1);
  double num = 0.0, den = 0.0;
  for (std::int64_t i = 0; i < draws; ++i) {
    for (int j = 1; j <= mc; ++j) x[j] = rng.truncated_normal(kTruncCut);
    double u = x[1];
    for (int j = 2; j <= s_alpha; ++j) u += ablock * x[j];
    double diff;
    if (dgp_a) {
      // beta_1 - beta_0 = 2 beta_1
      double lin = 3.0 + 3.0 * x[1];
      for (int j = 2; j <= s_beta; ++j) lin += bblock * x[j];
      diff = 2.0 * lin;
    } else {
      double lin = 3.0 + 3.0 * x[1];
      double quad = -12.0 + 0.5 * x[1] * x[1];
      for (int j = 2; j <= s_beta; ++j) {
        lin += bblock * x[j];
        quad += qblock * x[j] * x[j];
      }
      diff = 2.0 * (5.0 * lin + quad);
    }
    double w = 1.0;
    if (transport) {
      const UnitProbs u_probs =
          unit_probs(dgp_a, x[1], alpha_n + u, alpha_n - u);
      w = 1.0 - u_probs.p_label;
    }
    num += diff * w;
    den += w;
  }
  if (den <= 0.0)
    throw std::runtime_error("true_tau: no unlabeled mass under the design");
  const double tau = num / den;

  std::lock_guard<std::mutex> lock(mutex);
  cache.emplace(key, tau);
  return tau;
}

namespace {

std::string provenance_for(std::int64_t draws) {
  return "monte_carlo(" + std::to_string(draws) + " draws)";
}

std::string treatment_note_for(const std::string& dgp) {
  if (dgp == "a")
    return "treatment model: P(A=1|X) = 0.3 sin(x[2]) + 0.5, applied to the "
           "first non-intercept coordinate";
  return "treatment model: P(A=1|X) = (g(x'a1) - g(x'a0) + 1)/2";
}

SimResult run_with(const Scenario& sc, double alpha_n,
                   const std::vector<NamedEstimator>& estimators, int jobs) {
  sc.validate();
  if (estimators.empty())
    throw std::invalid_argument("run_replications: no estimators requested");
  const int n_est = static_cast<int>(estimators.size());

  SimResult result;
  result.scenario = sc;
  result.alpha_n = alpha_n;
  result.treatment_note = treatment_note_for(sc.dgp);
  result.raw.resize(static_cast<std::size_t>(sc.reps) * n_est);

  parallel_for(sc.reps, jobs, [&](int r) {
    GenOutput gen;
    bool gen_ok = true;
    std::string gen_error;
    try {
      gen = gen_dgp(sc, alpha_n, r);
    } catch (const std::exception& e) {
      gen_ok = false;
      gen_error = e.what();
    }
    const std::uint64_t rep_seed =
        derive_seed(sc.seed, 0xe571u, static_cast<std::uint64_t>(r));
    for (int e = 0; e < n_est; ++e) {
      RepRow& row = result.raw[static_cast<std::size_t>(r) * n_est + e];
      row.rep = r;
      row.estimator = estimators[e].name;
      if (!gen_ok) {
        row.failed = true;
        row.error = gen_error;
        continue;
      }
      try {
        const EstimateReport rep = estimators[e].fn(gen.data, gen.summary, rep_seed);
        row.point = rep.point;
        if (rep.ci) {
          row.has_ci = true;
          row.lo = rep.ci->first;
          row.hi = rep.ci->second;
        }
      } catch (const std::exception& ex) {
        row.failed = true;
        row.error = ex.what();
      }
    }
  });

  for (int e = 0; e < n_est; ++e) {
    EstimatorMetrics m;
    m.name = estimators[e].name;
    m.tau_true = estimators[e].tau_true;
    m.tau_provenance = estimators[e].tau_provenance;
    std::vector<double> errs, abs_errs, lengths;
    double cover_acc = 0.0;
    int cover_n = 0;
    for (int r = 0; r < sc.reps; ++r) {
      const RepRow& row = result.raw[static_cast<std::size_t>(r) * n_est + e];
      if (row.failed) {
        ++m.failures;
        continue;
      }
      errs.push_back(row.point - m.tau_true);
      abs_errs.push_back(std::abs(row.point - m.tau_true));
      if (row.has_ci) {
        lengths.push_back(row.hi - row.lo);
        cover_acc += (row.lo <= m.tau_true && m.tau_true <= row.hi) ? 1.0 : 0.0;
        ++cover_n;
      }
    }
    if (m.failures * 20 > sc.reps) {
      std::string first;
      for (int r = 0; r < sc.reps && first.empty(); ++r) {
        const RepRow& row = result.raw[static_cast<std::size_t>(r) * n_est + e];
        if (row.failed) first = row.error;
      }
      throw std::runtime_error(
          m.name + ": " + std::to_string(m.failures) + " of " +
          std::to_string(sc.reps) +
          " replications failed (more than 5%); first error: " + first);
    }
    m.used = sc.reps - m.failures;
    m.bias = errs.empty() ? 0.0 : median(errs);
    m.rmse_med = abs_errs.empty() ? 0.0 : median(abs_errs);
    m.length = lengths.empty() ? 0.0 : median(lengths);
    m.coverage = cover_n > 0 ? cover_acc / cover_n : 0.0;
    result.metrics.push_back(std::move(m));
  }
  result.tau_true = result.metrics.front().tau_true;
  result.tau_provenance = result.metrics.front().tau_provenance;
  return result;
}

}  // namespace

SimResult run_replications(const Scenario& sc, int jobs) {
  sc.validate();
  if (sc.estimators.empty())
    throw std::invalid_argument("run_replications: scenario names no estimators");
  const double alpha_n =
      calibrate_alpha_n(sc.dgp, sc.gamma_target, sc.d, sc.s_alpha);
  std::vector<NamedEstimator> list;
  for (const std::string& tag : sc.estimators) {
    NamedEstimator ne;
    ne.name = tag;
    ne.tau_provenance = provenance_for(10000000);
    if (tag == "tau_g") {
      ne.tau_true = true_tau(sc.dgp, false, sc.d, sc.s_alpha, sc.s_beta, alpha_n);
      ne.fn = [](const PrimaryDataset& data, const ExternalSummary& summary,
                 std::uint64_t seed) {
        causal::Options opts;
        opts.seed = seed;
        return causal::estimate_ate_generalize(data, summary, opts).report;
      };
    } else if (tag == "tau_t") {
      ne.tau_true = true_tau(sc.dgp, true, sc.d, sc.s_alpha, sc.s_beta, alpha_n);
      ne.fn = [](const PrimaryDataset& data, const ExternalSummary& summary,
                 std::uint64_t seed) {
        causal::Options opts;
        opts.seed = seed;
        return causal::estimate_ate_transport(data, summary, opts).report;
      };
    } else {
      throw std::invalid_argument(
          "run_replications: unknown estimator tag '" + tag +
          "' (the scenario runner drives tau_g and tau_t)");
    }
    list.push_back(std::move(ne));
  }
  return run_with(sc, alpha_n, list, jobs);
}

SimResult run_replications(const Scenario& sc,
                           const std::vector<NamedEstimator>& estimators,
                           int jobs) {
  sc.validate();
  const double alpha_n =
      calibrate_alpha_n(sc.dgp, sc.gamma_target, sc.d, sc.s_alpha);
  return run_with(sc, alpha_n, estimators, jobs);
}

std::string sim_result_to_json(const SimResult& r) {
  nlohmann::ordered_json j;
  j["scenario"] = {{"dgp", r.scenario.dgp},
                   {"n", r.scenario.n},
                   {"d", r.scenario.d},
                   {"s_alpha", r.scenario.s_alpha},
                   {"s_beta", r.scenario.s_beta},
                   {"gamma", r.scenario.gamma_target},
                   {"reps", r.scenario.reps},
                   {"estimators", r.scenario.estimators},
                   {"seed", r.scenario.seed}};
  j["alpha_n"] = r.alpha_n;
  j["treatment_note"] = r.treatment_note;
  j["tau_true"] = r.tau_true;
  j["tau_provenance"] = r.tau_provenance;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const EstimatorMetrics& m : r.metrics) {
    rows.push_back({{"estimator", m.name},
                    {"tau_true", m.tau_true},
                    {"tau_provenance", m.tau_provenance},
                    {"bias", m.bias},
                    {"rmse_med", m.rmse_med},
                    {"length", m.length},
                    {"coverage", m.coverage},
                    {"used", m.used},
                    {"failures", m.failures}});
  }
  j["estimators"] = std::move(rows);
  nlohmann::ordered_json raw = nlohmann::ordered_json::array();
  for (const RepRow& row : r.raw) {
    nlohmann::ordered_json o{{"rep", row.rep}, {"estimator", row.estimator}};
    if (row.failed) {
      o["failed"] = true;
      o["error"] = row.error;
    } else {
      o["point"] = row.point;
      if (row.has_ci) {
        o["lo"] = row.lo;
        o["hi"] = row.hi;
      }
    }
    raw.push_back(std::move(o));
  }
  j["replications"] = std::move(raw);
  return j.dump(2);
}

void save_sim_json(const std::string& path, const SimResult& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << sim_result_to_json(r) << "\n";
}

}  // namespace summint::sim
