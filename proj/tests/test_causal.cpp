#include <cmath>
#include <vector>

#include "doctest.h"
#include "summint/causal.hpp"
#include "summint/rng.hpp"
#include "summint/stats.hpp"
#include "support/dgps.hpp"

using namespace summint;

namespace {

FoldPlan hand_plan(std::vector<int> lab0, std::vector<int> ext0,
                   std::vector<int> lab1, std::vector<int> ext1) {
  FoldPlan plan;
  plan.K = 2;
  plan.n_labeled = static_cast<std::int64_t>(lab0.size() + lab1.size());
  plan.n_external = static_cast<std::int64_t>(ext0.size() + ext1.size());
  plan.folds.resize(2);
  plan.folds[0].labeled = std::move(lab0);
  plan.folds[0].external_ids = std::move(ext0);
  plan.folds[1].labeled = std::move(lab1);
  plan.folds[1].external_ids = std::move(ext1);
  plan.complements.resize(2);
  return plan;
}

causal::Options fast_opts(std::uint64_t seed, int K = 2) {
  causal::Options opts;
  opts.K = K;
  opts.lambda_alpha = optim::LambdaRule::fixed(0.05);
  opts.lambda_beta = optim::LambdaRule::fixed(0.05);
  opts.seed = seed;
  return opts;
}

}  // namespace

TEST_CASE("arm-effective group mean pools externals with the other arm") {
  ExternalSummary sum;
  sum.n_external = 2;
  sum.mean.resize(2);
  sum.mean << 1, 3;

  PrimaryDataset data;
  data.x.resize(3, 2);
  data.x << 1, 0.25, 1, 5, 1, -2;
  data.y.resize(3);
  data.y << 0, 0, 0;
  data.n_external = 2;

  SUBCASE("no opposite-arm units leaves the external mean untouched") {
    data.treat = Eigen::VectorXi::Ones(3);
    auto [mean, count] = causal::effective_summary_g(1, sum, data);
    CHECK(count == 2);
    CHECK(mean[0] == 1.0);
    CHECK(mean[1] == 3.0);
  }

  SUBCASE("one opposite-arm row enters the pooled average") {
    Eigen::VectorXi tr(3);
    tr << 1, 0, 1;  // row 1 with x = (1, 5) joins the arm-1 external group
    data.treat = tr;
    auto [mean, count] = causal::effective_summary_g(1, sum, data);
    CHECK(count == 3);
    CHECK(mean[0] == 1.0);  // intercept stays exact despite the division
    CHECK(mean[1] == doctest::Approx(11.0 / 3.0).epsilon(1e-15));
  }

  SUBCASE("an arm with no complementary units at all is degenerate") {
    data.treat = Eigen::VectorXi::Ones(3);
    data.n_external = 0;
    ExternalSummary empty;
    empty.n_external = 0;
    empty.mean = sum.mean;
    CHECK_THROWS_WITH_AS(causal::effective_summary_g(1, empty, data),
                         doctest::Contains("effective external group"),
                         std::runtime_error);
  }

  SUBCASE("bad arm and missing labels are rejected") {
    data.treat = Eigen::VectorXi::Ones(3);
    CHECK_THROWS_AS(causal::effective_summary_g(2, sum, data), std::invalid_argument);
    data.treat.reset();
    CHECK_THROWS_AS(causal::effective_summary_g(1, sum, data), std::invalid_argument);
  }
}

TEST_CASE("external-population effect on paper-and-pencil numbers") {
  PrimaryDataset data;
  data.x.resize(4, 2);
  data.x << 1, 0.5, 1, -1.25, 1, 2, 1, 0;
  data.y.resize(4);
  data.y << 2, 3, 4, 1;
  Eigen::VectorXi tr(4);
  tr << 1, 0, 1, 0;
  data.treat = tr;
  data.n_external = 4;

  ExternalSummary sum;
  sum.n_external = 4;
  sum.mean.resize(2);
  sum.mean << 1, 2;
  sum.gram = Eigen::MatrixXd(2, 2);
  *sum.gram << 1, 2, 2, 5;

  FoldPlan plan = hand_plan({0, 1}, {0, 1}, {2, 3}, {2, 3});
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);  // transport weight e^0 = 1
  Eigen::VectorXd b1(2), b0(2);
  b1 << 1, 0;    // arm-1 predictions identically 1
  b0 << 0.5, 0;  // arm-0 predictions identically 0.5
  std::vector<Eigen::VectorXd> a1{zero, zero}, a0{zero, zero};
  std::vector<Eigen::VectorXd> bb1{b1, b1}, bb0{b0, b0};

  causal::Options opts;
  EstimateReport rep =
      causal::tau_t_from_coefs(data, sum, plan, a1, bb1, a0, bb0, opts);
  // arm 1: 1 + 2*(1 + 3)/8 = 2; arm 0: 0.5 + 2*(2.5 + 0.5)/8 = 1.25.
  REQUIRE(rep.diagnostics.arm1_point.has_value());
  REQUIRE(rep.diagnostics.arm0_point.has_value());
  CHECK(*rep.diagnostics.arm1_point == 2.0);
  CHECK(*rep.diagnostics.arm0_point == 1.25);
  CHECK(rep.point == 0.75);
  // per fold: (0.25 - 2*0.75*0.5 + 0.5625)*2/2 = 0.0625, plus
  // 4*(1 + 6.25)/8 = 3.625 and 4*(9 + 0.25)/8 = 4.625 residual terms.
  REQUIRE(rep.variance.has_value());
  CHECK(*rep.variance == 8.375);
  REQUIRE(rep.se.has_value());
  CHECK(*rep.se == doctest::Approx(std::sqrt(8.375 / 8.0)).epsilon(1e-14));
  CHECK(rep.estimand == Estimand::tau_t);
}

TEST_CASE("the reported effect is exactly the arm decomposition") {
  dgps::CausalDraw g = dgps::gen_causal_constant_effect(61, 500, 6, 3, 2.0);
  causal::Options opts = fast_opts(7, 2);
  causal::AteFit fit = causal::estimate_ate_generalize(g.data, g.summary, opts);
  REQUIRE(fit.report.diagnostics.arm1_point.has_value());
  REQUIRE(fit.report.diagnostics.arm0_point.has_value());
  CHECK(fit.report.point ==
        doctest::Approx(*fit.report.diagnostics.arm1_point -
                        *fit.report.diagnostics.arm0_point)
            .epsilon(1e-12));
  CHECK(fit.report.estimand == Estimand::tau_g);
  // Diagnostics carry both arms' fits, tagged by arm.
  bool saw1 = false, saw0 = false;
  for (const auto& fd : fit.report.diagnostics.fits) {
    saw1 = saw1 || fd.arm == 1;
    saw0 = saw0 || fd.arm == 0;
  }
  CHECK(saw1);
  CHECK(saw0);
}

TEST_CASE("opposite-arm outcomes never reach an arm's nuisances") {
  dgps::CausalDraw g = dgps::gen_causal_constant_effect(63, 400, 6, 3, 2.0);
  causal::Options opts = fast_opts(11, 2);
  causal::AteFit base_g = causal::estimate_ate_generalize(g.data, g.summary, opts);
  causal::AteFit base_t = causal::estimate_ate_transport(g.data, g.summary, opts);

  PrimaryDataset poisoned = g.data;
  for (Eigen::Index i = 0; i < poisoned.y.size(); ++i)
    if ((*poisoned.treat)[i] == 0) poisoned.y[i] += 100.0;

  causal::AteFit pg = causal::estimate_ate_generalize(poisoned, g.summary, opts);
  causal::AteFit pt = causal::estimate_ate_transport(poisoned, g.summary, opts);
  for (int k = 0; k < 2; ++k) {
    CHECK((pg.arm1.alpha[k].beta - base_g.arm1.alpha[k].beta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pg.arm1.beta[k].beta - base_g.arm1.beta[k].beta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pt.arm1.alpha[k].beta - base_t.arm1.alpha[k].beta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pt.arm1.beta[k].beta - base_t.arm1.beta[k].beta).cwiseAbs().maxCoeff() == 0.0);
  }
  // Arm 0 regressions do see their own outcomes move.
  CHECK((pg.arm0.beta[0].beta - base_g.arm0.beta[0].beta).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("opposite-arm covariates matter only through the pooled mean") {
  dgps::CausalDraw g = dgps::gen_causal_constant_effect(65, 400, 6, 3, 2.0);
  causal::Options opts = fast_opts(13, 2);
  causal::AteFit base_g = causal::estimate_ate_generalize(g.data, g.summary, opts);
  causal::AteFit base_t = causal::estimate_ate_transport(g.data, g.summary, opts);

  PrimaryDataset poisoned = g.data;
  for (Eigen::Index i = 0; i < poisoned.x.rows(); ++i)
    if ((*poisoned.treat)[i] == 0) poisoned.x(i, 1) += 10.0;

  // Transport imputes every arm at the plain external mean, so arm-1
  // nuisances cannot move; the generalize path pools opposite-arm rows
  // into the imputed mean, so they must.
  causal::AteFit pt = causal::estimate_ate_transport(poisoned, g.summary, opts);
  for (int k = 0; k < 2; ++k) {
    CHECK((pt.arm1.alpha[k].beta - base_t.arm1.alpha[k].beta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pt.arm1.beta[k].beta - base_t.arm1.beta[k].beta).cwiseAbs().maxCoeff() == 0.0);
  }
  causal::AteFit pg = causal::estimate_ate_generalize(poisoned, g.summary, opts);
  CHECK((pg.arm1.alpha[0].beta - base_g.arm1.alpha[0].beta).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("a null effect is estimated near zero with honest intervals") {
  const int reps = 200;
  std::vector<double> taus, ses;
  int covered = 0;
  for (int r = 0; r < reps; ++r) {
    dgps::CausalDraw g =
        dgps::gen_causal_constant_effect(2000 + r, 500, 6, 3, 0.0);
    causal::Options opts = fast_opts(derive_seed(5, 0x7au, r), 5);
    causal::AteFit fit = causal::estimate_ate_transport(g.data, g.summary, opts);
    taus.push_back(fit.report.point);
    ses.push_back(*fit.report.se);
    if (std::abs(fit.report.point) <= normal_quantile(0.975) * *fit.report.se)
      ++covered;
  }
  CHECK(std::abs(median(taus)) <= 2.0 * median(ses));
  CHECK(covered >= static_cast<int>(0.85 * reps));
}

TEST_CASE("both effect targets agree when the effect is homogeneous") {
  const int reps = 100;
  std::vector<double> diffs, combined, gpoints;
  for (int r = 0; r < reps; ++r) {
    dgps::CausalDraw g =
        dgps::gen_causal_constant_effect(4000 + r, 600, 6, 3, 3.0, 0.0);
    causal::Options opts = fast_opts(derive_seed(6, 0x7bu, r), 5);
    causal::AteFit fg = causal::estimate_ate_generalize(g.data, g.summary, opts);
    causal::AteFit ft = causal::estimate_ate_transport(g.data, g.summary, opts);
    diffs.push_back(std::abs(ft.report.point - fg.report.point));
    combined.push_back(*fg.report.se + *ft.report.se);
    gpoints.push_back(fg.report.point);
  }
  CHECK(median(diffs) <= 3.0 * median(combined));
  CHECK(std::abs(median(gpoints) - 3.0) <= 0.15);
}

TEST_CASE("an arm with no labeled units is reported by name") {
  Rng rng(3);
  PrimaryDataset data;
  data.x = Eigen::MatrixXd::Ones(40, 3);
  data.y.resize(40);
  for (int i = 0; i < 40; ++i) {
    data.x(i, 1) = rng.truncated_normal();
    data.x(i, 2) = rng.truncated_normal();
    data.y[i] = rng.normal();
  }
  data.treat = Eigen::VectorXi::Ones(40);
  data.n_external = 20;
  Eigen::MatrixXd ext(20, 3);
  for (int i = 0; i < 20; ++i) {
    ext(i, 0) = 1.0;
    ext(i, 1) = rng.truncated_normal();
    ext(i, 2) = rng.truncated_normal();
  }
  ExternalSummary sum = summarize_external(ext);
  causal::Options opts = fast_opts(1, 2);
  CHECK_THROWS_WITH_AS(causal::estimate_ate_generalize(data, sum, opts),
                       doctest::Contains("arm 0"), std::runtime_error);
}

TEST_CASE("effect-target input guards") {
  dgps::CausalDraw g = dgps::gen_causal_constant_effect(71, 300, 5, 2, 1.0);
  causal::Options opts = fast_opts(2, 2);
  PrimaryDataset no_treat = g.data;
  no_treat.treat.reset();
  CHECK_THROWS_WITH_AS(causal::estimate_ate_generalize(no_treat, g.summary, opts),
                       doctest::Contains("treatment"), std::invalid_argument);
  ExternalSummary off = g.summary;
  off.n_external += 2;
  CHECK_THROWS_WITH_AS(causal::estimate_ate_transport(g.data, off, opts),
                       doctest::Contains("external counts"), std::invalid_argument);
  causal::Options bad = opts;
  bad.level = 0.0;
  CHECK_THROWS_WITH_AS(causal::estimate_ate_generalize(g.data, g.summary, bad),
                       doctest::Contains("level"), std::invalid_argument);
}
