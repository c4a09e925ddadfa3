#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "summint/causal.hpp"
#include "summint/io.hpp"
#include "summint/mar.hpp"
#include "summint/mcar.hpp"
#include "summint/plm.hpp"
#include "summint/rng.hpp"
#include "summint/sim.hpp"
#include "summint/types.hpp"
#include "summint/verify.hpp"

namespace {

using namespace summint;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string estimand_name(Estimand e) {
  switch (e) {
    case Estimand::mean_mcar: return "mean_mcar";
    case Estimand::mean_plm: return "mean_plm";
    case Estimand::theta_g: return "theta_g";
    case Estimand::theta_t: return "theta_t";
    case Estimand::tau_g: return "tau_g";
    case Estimand::tau_t: return "tau_t";
  }
  return "?";
}

std::string source_name(VarianceSource s) {
  switch (s) {
    case VarianceSource::external_gram: return "external_gram";
    case VarianceSource::primary_only: return "primary_only";
    case VarianceSource::conservative_diag: return "conservative_diag";
    case VarianceSource::unavailable: return "unavailable";
  }
  return "?";
}

void print_report(const EstimateReport& rep) {
  std::ostringstream out;
  out << "estimand         " << estimand_name(rep.estimand) << "\n";
  out << "point            " << rep.point << "\n";
  if (rep.se)
    out << "se               " << *rep.se << "\n";
  else
    out << "se               unavailable\n";
  if (rep.ci)
    out << 100.0 * rep.level << "% CI           [" << rep.ci->first << ", "
        << rep.ci->second << "]\n";
  else
    out << 100.0 * rep.level << "% CI           unavailable\n";
  out << "variance source  " << source_name(rep.diagnostics.variance_source)
      << (rep.diagnostics.variance_floored ? " (floored)" : "") << "\n";
  out << "n / labeled      " << rep.n << " / " << rep.n_labeled << "\n";

  // Support sizes per nuisance role, fold order, one line per (role, arm).
  std::vector<std::string> keys;
  std::vector<std::string> lines;
  for (const FitDiagnostics& f : rep.diagnostics.fits) {
    std::string key = f.role;
    if (f.arm >= 0) key += " arm " + std::to_string(f.arm);
    std::size_t at = keys.size();
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (keys[i] == key) at = i;
    if (at == keys.size()) {
      keys.push_back(key);
      lines.push_back("");
    }
    lines[at] += (lines[at].empty() ? "" : " ") + std::to_string(f.support_size);
  }
  for (std::size_t i = 0; i < keys.size(); ++i)
    out << "support (" << keys[i] << ")  " << lines[i] << "\n";
  for (const std::string& w : rep.diagnostics.warnings)
    out << "warning          " << w << "\n";
  std::cout << out.str();
}

struct EstimateFlags {
  std::string data_path;
  std::string summary_path;
  std::string out_path;
  std::int64_t n_external = -1;
  int folds = 5;
  double level = 0.95;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double lambda_theory = 0.0;
  int lambda_grid = 30;
  int cv_folds = 5;
  double tol = 1e-8;
  int max_iter = 10000;
  bool penalize_intercept = false;
  bool require_ci = false;
  double clip_weights = 0.0;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* theory_opt = nullptr;
};

void add_estimate_flags(CLI::App* cmd, EstimateFlags& f, bool with_clip) {
  cmd->add_option("--data", f.data_path, "labeled-unit CSV (y[,a],x1..xd)")
      ->required();
  cmd->add_option("--summary", f.summary_path, "external summary JSON")
      ->required();
  cmd->add_option("--n-external", f.n_external,
                  "unlabeled count (default: taken from the summary)");
  cmd->add_option("--folds", f.folds, "cross-fitting folds K");
  cmd->add_option("--level", f.level, "confidence level");
  cmd->add_option("--seed", f.seed, "RNG seed for fold splits and CV")
      ->required();
  cmd->add_option("--out", f.out_path, "write the report JSON here");
  f.lambda_opt = cmd->add_option("--lambda", f.lambda, "fixed penalty level");
  f.theory_opt = cmd->add_option(
      "--lambda-theory", f.lambda_theory,
      "use c * sqrt(log d / (n gamma)) with this constant c");
  cmd->add_option("--lambda-grid", f.lambda_grid, "CV grid size");
  cmd->add_option("--cv-folds", f.cv_folds, "folds inside CV");
  cmd->add_option("--tol", f.tol, "solver tolerance");
  cmd->add_option("--max-iter", f.max_iter, "solver iteration cap");
  cmd->add_flag("--penalize-intercept", f.penalize_intercept,
                "penalize the intercept coordinate too");
  cmd->add_flag("--require-ci", f.require_ci,
                "fail instead of reporting a point without an interval");
  if (with_clip)
    cmd->add_option("--clip-weights", f.clip_weights,
                    "cap on inverse-propensity factors (0 = off)");
}

optim::LambdaRule rule_from(const EstimateFlags& f) {
  const bool has_fixed = f.lambda_opt && f.lambda_opt->count() > 0;
  const bool has_theory = f.theory_opt && f.theory_opt->count() > 0;
  if (has_fixed && has_theory)
    throw UsageError("--lambda conflicts with --lambda-theory: pick one rule");
  if (has_fixed) return optim::LambdaRule::fixed(f.lambda);
  if (has_theory) return optim::LambdaRule::theory(f.lambda_theory);
  optim::LambdaRule r = optim::LambdaRule::cv();
  r.grid_points = f.lambda_grid;
  r.cv_folds = f.cv_folds;
  return r;
}

optim::SolveOptions solve_from(const EstimateFlags& f) {
  optim::SolveOptions s;
  s.tol = f.tol;
  s.max_iter = f.max_iter;
  return s;
}

io::LoadedPrimary load_inputs(const EstimateFlags& f, const ExternalSummary& summary,
                              const std::vector<std::string>& z_cols = {}) {
  const std::int64_t n_ext =
      f.n_external >= 0 ? f.n_external : summary.n_external;
  return io::load_primary_csv(f.data_path, n_ext, z_cols);
}

void finish(const EstimateReport& rep, const EstimateFlags& f) {
  print_report(rep);
  if (!f.out_path.empty()) io::save_report_json(f.out_path, rep);
}

int run_summarize(const std::string& data_path, const std::string& moments,
                  const std::string& out_path) {
  const Eigen::MatrixXd rows = io::read_numeric_csv(data_path);
  const ExternalSummary s = summarize_external(rows, moments);
  io::save_summary_json(out_path, s);
  std::cout << "summarized " << s.n_external << " rows, d = " << s.mean.size()
            << ", moments = " << moments << " -> " << out_path << "\n";
  return 0;
}

int run_estimate_mean(const EstimateFlags& f, const std::string& assume,
                      const std::string& target,
                      const std::string& z_cols_arg,
                      const std::string& z_external_path) {
  if (assume != "mar" && !target.empty())
    throw UsageError("--target " + target + " conflicts with --assume " + assume +
                     ": the mcar estimators address the combined population");
  if (assume != "mcar-plm" && (!z_cols_arg.empty() || !z_external_path.empty()))
    throw UsageError("--z-cols/--z-external only apply to --assume mcar-plm");

  const ExternalSummary summary = io::load_summary_json(f.summary_path);

  if (assume == "mcar") {
    mcar::Options opts;
    opts.K = f.folds;
    opts.level = f.level;
    opts.lambda = rule_from(f);
    opts.solve = solve_from(f);
    opts.penalize_intercept = f.penalize_intercept;
    opts.seed = f.seed;
    const io::LoadedPrimary in = load_inputs(f, summary);
    finish(mcar::estimate_mean_mcar(in.data, summary, opts).report, f);
    return 0;
  }
  if (assume == "mcar-plm") {
    if (z_cols_arg.empty())
      throw UsageError("--assume mcar-plm needs --z-cols");
    if (z_external_path.empty())
      throw UsageError("--assume mcar-plm needs --z-external");
    std::vector<std::string> z_cols;
    std::stringstream ss(z_cols_arg);
    std::string piece;
    while (std::getline(ss, piece, ',')) z_cols.push_back(piece);
    plm::Options opts;
    opts.K = f.folds;
    opts.level = f.level;
    opts.lambda_points = f.lambda_grid < 5 ? f.lambda_grid : 5;
    opts.cv_folds = f.cv_folds;
    opts.solve = solve_from(f);
    opts.penalize_intercept = f.penalize_intercept;
    opts.require_ci = f.require_ci;
    opts.seed = f.seed;
    const io::LoadedPrimary in = load_inputs(f, summary, z_cols);
    plm::PlmDataset data;
    data.base = in.data;
    data.z_labeled = in.z;
    data.z_external = io::read_numeric_csv(z_external_path);
    finish(plm::estimate_mean_plm(data, summary, opts).report, f);
    return 0;
  }
  if (assume == "mar") {
    mar::Options opts;
    opts.K = f.folds;
    opts.level = f.level;
    opts.lambda_alpha = rule_from(f);
    opts.lambda_beta = rule_from(f);
    opts.solve = solve_from(f);
    opts.penalize_intercept = f.penalize_intercept;
    opts.require_ci = f.require_ci;
    opts.clip_weight = f.clip_weights;
    opts.seed = f.seed;
    const io::LoadedPrimary in = load_inputs(f, summary);
    const std::string tgt = target.empty() ? "generalize" : target;
    if (tgt == "generalize")
      finish(mar::estimate_theta_g(in.data, summary, opts).report, f);
    else if (tgt == "transport")
      finish(mar::estimate_theta_t(in.data, summary, opts).report, f);
    else
      throw UsageError("--target must be generalize or transport, got " + tgt);
    return 0;
  }
  throw UsageError("--assume must be mcar, mcar-plm, or mar, got " + assume);
}

int run_estimate_ate(const EstimateFlags& f, const std::string& target) {
  const ExternalSummary summary = io::load_summary_json(f.summary_path);
  causal::Options opts;
  opts.K = f.folds;
  opts.level = f.level;
  opts.lambda_alpha = rule_from(f);
  opts.lambda_beta = rule_from(f);
  opts.solve = solve_from(f);
  opts.penalize_intercept = f.penalize_intercept;
  opts.require_ci = f.require_ci;
  opts.clip_weight = f.clip_weights;
  opts.seed = f.seed;
  const io::LoadedPrimary in = load_inputs(f, summary);
  if (target == "generalize")
    finish(causal::estimate_ate_generalize(in.data, summary, opts).report, f);
  else if (target == "transport")
    finish(causal::estimate_ate_transport(in.data, summary, opts).report, f);
  else
    throw UsageError("--target must be generalize or transport, got " + target);
  return 0;
}

int effective_jobs(int jobs_flag) {
  if (const char* env = std::getenv("SUMMINT_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  return jobs_flag;
}

int run_simulate(const sim::Scenario& sc, int jobs, const std::string& out_path) {
  const sim::SimResult res = sim::run_replications(sc, effective_jobs(jobs));
  for (const sim::EstimatorMetrics& m : res.metrics)
    std::cout << m.name << ": bias " << m.bias << ", rmse_med " << m.rmse_med
              << ", length " << m.length << ", coverage " << m.coverage
              << " (tau_true " << m.tau_true << ", " << m.used << " used, "
              << m.failures << " failed)\n";
  if (!out_path.empty()) sim::save_sim_json(out_path, res);
  return 0;
}

// Self-contained diagnostics battery on synthetic data: stationarity
// certificates, finite-difference gradient agreement, and the
// summary-sufficiency replay for each estimand. Values are kept on a
// 1/8 grid with power-of-two row counts so replacement sums are exact.
int run_verify(std::uint64_t seed) {
  bool all_ok = true;
  auto report_line = [&](bool ok, const std::string& what) {
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << what << "\n";
    if (!ok) all_ok = false;
  };

  Rng rng(derive_seed(seed, 0xc11u));
  auto dyadic = [&](double lo, double hi) {
    const double step = 0.125;
    const int span = static_cast<int>((hi - lo) / step);
    return lo + step * static_cast<double>(rng.uniform_int(span + 1));
  };

  // Penalized quadratic stationarity + gradient probes.
  {
    const Eigen::Index n = 64, d = 6;
    optim::QuadProblem p;
    p.x.resize(n, d);
    p.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p.x(i, 0) = 1.0;
      for (Eigen::Index j = 1; j < d; ++j) p.x(i, j) = dyadic(-2.0, 2.0);
      p.y[i] = dyadic(-4.0, 4.0);
    }
    p.lambda = 0.1;
    optim::SolveOptions sopt;
    const optim::PenalizedFit fit = optim::solve_lasso(p, sopt);
    const double kkt = verify::kkt_residual(fit, p);
    report_line(kkt <= 10.0 * sopt.tol,
                "lasso stationarity residual " + std::to_string(kkt));
    Eigen::VectorXd at = Eigen::VectorXd::Zero(d);
    for (Eigen::Index j = 0; j < d; ++j) at[j] = dyadic(-1.0, 1.0);
    const Eigen::VectorXd g = verify::quad_gradient(p, at);
    const Eigen::VectorXd fd = verify::fd_gradient(
        [&](const Eigen::VectorXd& b) { return verify::quad_smooth_loss(p, b); }, at);
    const double rel = (g - fd).norm() / std::max(1.0, g.norm());
    report_line(rel <= 1e-5, "quadratic gradient vs finite differences, rel " +
                                 std::to_string(rel));
  }

  // Exponential-tilt stationarity + gradient probes.
  {
    const Eigen::Index n = 48, d = 4;
    optim::TiltProblem p;
    p.exp_rows.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      p.exp_rows(i, 0) = 1.0;
      for (Eigen::Index j = 1; j < d; ++j) p.exp_rows(i, j) = dyadic(-2.0, 2.0);
    }
    p.normalizer = static_cast<double>(2 * n);
    p.linear = (p.exp_rows.colwise().mean() * (static_cast<double>(n) / p.normalizer))
                   .transpose();
    p.lambda = 0.05;
    optim::SolveOptions sopt;
    const optim::PenalizedFit fit = optim::solve_tilt(p, sopt);
    const double kkt = verify::kkt_residual(fit, p);
    report_line(kkt <= 10.0 * sopt.tol,
                "tilt stationarity residual " + std::to_string(kkt));
    Eigen::VectorXd at = Eigen::VectorXd::Zero(d);
    const Eigen::VectorXd g = verify::tilt_gradient(p, at);
    const Eigen::VectorXd fd = verify::fd_gradient(
        [&](const Eigen::VectorXd& b) { return verify::tilt_smooth_loss(p, b); }, at);
    const double rel = (g - fd).norm() / std::max(1.0, g.norm());
    report_line(rel <= 1e-5,
                "tilt gradient vs finite differences, rel " + std::to_string(rel));
  }

  // Summary sufficiency for every estimand that consumes a summary.
  {
    const Eigen::Index n_lab = 64, n_ext = 32, d = 4;
    PrimaryDataset lab;
    lab.x.resize(n_lab, d);
    lab.y.resize(n_lab);
    Eigen::VectorXi treat(n_lab);
    for (Eigen::Index i = 0; i < n_lab; ++i) {
      lab.x(i, 0) = 1.0;
      for (Eigen::Index j = 1; j < d; ++j) lab.x(i, j) = dyadic(-2.0, 2.0);
      lab.y[i] = dyadic(-4.0, 4.0);
      treat[i] = (i % 2 == 0) ? 1 : 0;
    }
    lab.treat = treat;
    lab.n_external = n_ext;
    Eigen::MatrixXd ext(n_ext, d);
    for (Eigen::Index i = 0; i < n_ext; ++i) {
      ext(i, 0) = 1.0;
      for (Eigen::Index j = 1; j < d; ++j) ext(i, j) = dyadic(-2.0, 2.0);
    }
    for (Estimand which : {Estimand::mean_mcar, Estimand::theta_g,
                           Estimand::theta_t, Estimand::tau_g, Estimand::tau_t}) {
      const verify::ShuffleCheck chk =
          verify::shuffle_equivalence(lab, ext, which, derive_seed(seed, 0x5eeu));
      report_line(chk.pass, "summary sufficiency, " + estimand_name(which));
      if (!chk.pass)
        for (const std::string& line : chk.detail) std::cout << "       " << line << "\n";
    }
  }

  std::cout << (all_ok ? "all checks passed\n" : "some checks FAILED\n");
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "summint: population means and treatment effects from individualized "
      "primary data plus external summary statistics"};
  app.require_subcommand(1);

  // summarize
  auto* sum_cmd = app.add_subcommand(
      "summarize", "reduce external covariate rows to (count, mean, gram)");
  std::string sum_data, sum_moments = "full", sum_out;
  sum_cmd->add_option("--data", sum_data, "external covariate CSV (x1..xd)")
      ->required();
  sum_cmd->add_option("--moments", sum_moments, "full | diag | mean");
  sum_cmd->add_option("--out", sum_out, "summary JSON path")->required();

  // estimate-mean
  auto* mean_cmd = app.add_subcommand(
      "estimate-mean", "population mean from labeled rows plus a summary");
  EstimateFlags mean_flags;
  std::string assume = "mcar", mean_target, z_cols_arg, z_external_path;
  mean_cmd->add_option("--assume", assume, "mcar | mcar-plm | mar");
  mean_cmd->add_option("--target", mean_target,
                       "generalize | transport (with --assume mar)");
  mean_cmd->add_option("--z-cols", z_cols_arg,
                       "comma-separated smooth-part columns (mcar-plm)");
  mean_cmd->add_option("--z-external", z_external_path,
                       "CSV of smooth-part columns for unlabeled units");
  add_estimate_flags(mean_cmd, mean_flags, true);

  // estimate-ate
  auto* ate_cmd = app.add_subcommand(
      "estimate-ate", "average treatment effect for the combined or external population");
  EstimateFlags ate_flags;
  std::string ate_target;
  ate_cmd->add_option("--target", ate_target, "generalize | transport")
      ->required();
  add_estimate_flags(ate_cmd, ate_flags, true);

  // simulate
  auto* sim_cmd = app.add_subcommand(
      "simulate", "replicated study of the estimators on synthetic designs");
  sim::Scenario sc;
  sc.d = 201;
  sc.s_alpha = 6;
  sc.s_beta = 2;
  int jobs = 1;
  std::string sim_out;
  std::string estimators_arg = "tau_g";
  sim_cmd->add_option("--dgp", sc.dgp, "a | b")->required();
  sim_cmd->add_option("--n", sc.n, "units per replication")->required();
  sim_cmd->add_option("--d", sc.d, "covariate dimension incl. intercept");
  sim_cmd->add_option("--s-alpha", sc.s_alpha, "propensity support size");
  sim_cmd->add_option("--s-beta", sc.s_beta, "outcome support size");
  sim_cmd->add_option("--gamma", sc.gamma_target, "labeling probability")
      ->required();
  sim_cmd->add_option("--reps", sc.reps, "replications")->required();
  sim_cmd->add_option("--estimators", estimators_arg,
                      "comma-separated tags: tau_g, tau_t");
  sim_cmd->add_option("--seed", sc.seed, "scenario seed")->required();
  sim_cmd->add_option("--jobs", jobs, "worker threads (SUMMINT_JOBS overrides)");
  sim_cmd->add_option("--out", sim_out, "result JSON path");

  // verify
  auto* ver_cmd = app.add_subcommand(
      "verify", "self-contained solver and protocol diagnostics");
  std::uint64_t ver_seed = 0;
  ver_cmd->add_option("--seed", ver_seed, "seed for the synthetic battery")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sum_cmd->parsed()) return run_summarize(sum_data, sum_moments, sum_out);
    if (mean_cmd->parsed())
      return run_estimate_mean(mean_flags, assume, mean_target, z_cols_arg,
                               z_external_path);
    if (ate_cmd->parsed()) return run_estimate_ate(ate_flags, ate_target);
    if (sim_cmd->parsed()) {
      sc.estimators.clear();
      std::stringstream ss(estimators_arg);
      std::string piece;
      while (std::getline(ss, piece, ',')) sc.estimators.push_back(piece);
      return run_simulate(sc, jobs, sim_out);
    }
    if (ver_cmd->parsed()) return run_verify(ver_seed);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
