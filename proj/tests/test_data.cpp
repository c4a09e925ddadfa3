#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "summint/io.hpp"
#include "summint/folds.hpp"
#include "summint/rng.hpp"
#include "summint/stats.hpp"
#include "summint/types.hpp"

using namespace summint;

namespace {

std::string temp_path(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

Eigen::MatrixXd random_rows(Rng& rng, int m, int d) {
  Eigen::MatrixXd r(m, d);
  for (int i = 0; i < m; ++i) {
    r(i, 0) = 1.0;
    for (int j = 1; j < d; ++j) r(i, j) = rng.normal();
  }
  return r;
}

}  // namespace

TEST_CASE("summary of two rows has the hand-computed moments") {
  Eigen::MatrixXd rows(2, 2);
  rows << 1, 2, 1, 4;
  ExternalSummary s = summarize_external(rows, "full");
  CHECK(s.n_external == 2);
  CHECK(s.mean[0] == 1.0);
  CHECK(s.mean[1] == 3.0);
  REQUIRE(s.gram.has_value());
  CHECK((*s.gram)(0, 0) == 1.0);
  CHECK((*s.gram)(0, 1) == 3.0);
  CHECK((*s.gram)(1, 0) == 3.0);
  CHECK((*s.gram)(1, 1) == 10.0);
  REQUIRE(s.gram_diag.has_value());
  CHECK((*s.gram_diag)[1] == 10.0);
}

TEST_CASE("summary of a single row is the row itself") {
  Eigen::MatrixXd rows(1, 2);
  rows << 1, 0;
  ExternalSummary s = summarize_external(rows, "full");
  CHECK(s.mean[0] == 1.0);
  CHECK(s.mean[1] == 0.0);
  CHECK((*s.gram)(0, 0) == 1.0);
  CHECK((*s.gram)(0, 1) == 0.0);
  CHECK((*s.gram)(1, 1) == 0.0);
}

TEST_CASE("summary covariance is PSD and the gram identity holds") {
  Rng rng(991);
  for (int trial = 0; trial < 10; ++trial) {
    const int m = 3 + static_cast<int>(rng.uniform_int(40));
    const int d = 2 + static_cast<int>(rng.uniform_int(6));
    Eigen::MatrixXd rows = random_rows(rng, m, d);
    ExternalSummary s = summarize_external(rows, "full");

    Eigen::MatrixXd cov = *s.gram - s.mean * s.mean.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);

    // Independent centered covariance, then Xi = Sigma + mean mean'.
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < m; ++i) mu += rows.row(i).transpose();
    mu /= static_cast<double>(m);
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < m; ++i) {
      Eigen::VectorXd c = rows.row(i).transpose() - mu;
      sigma += c * c.transpose();
    }
    sigma /= static_cast<double>(m);
    Eigen::MatrixXd xi = sigma + mu * mu.transpose();
    CHECK((*s.gram - xi).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("summary is bit-identical under row permutation") {
  Rng rng(17);
  Eigen::MatrixXd rows = random_rows(rng, 23, 4);
  ExternalSummary a = summarize_external(rows, "full");

  std::vector<int> perm(23);
  for (int i = 0; i < 23; ++i) perm[i] = i;
  Rng shuf(5);
  shuf.shuffle(perm);
  Eigen::MatrixXd permuted(23, 4);
  for (int i = 0; i < 23; ++i) permuted.row(i) = rows.row(perm[i]);
  ExternalSummary b = summarize_external(permuted, "full");

  CHECK((a.mean.array() == b.mean.array()).all());
  CHECK((a.gram->array() == b.gram->array()).all());
  CHECK((a.gram_diag->array() == b.gram_diag->array()).all());
}

TEST_CASE("summary moment levels") {
  Eigen::MatrixXd rows(2, 2);
  rows << 1, 2, 1, 4;
  ExternalSummary diag = summarize_external(rows, "diag");
  CHECK_FALSE(diag.gram.has_value());
  REQUIRE(diag.gram_diag.has_value());
  CHECK((*diag.gram_diag)[1] == 10.0);
  ExternalSummary none = summarize_external(rows, "none");
  CHECK_FALSE(none.gram.has_value());
  CHECK_FALSE(none.gram_diag.has_value());
  CHECK_THROWS_WITH_AS(summarize_external(rows, "half"),
                       doctest::Contains("moments"), std::invalid_argument);
}

TEST_CASE("summarize rejects empty or intercept-violating input") {
  Eigen::MatrixXd none(0, 2);
  CHECK_THROWS_WITH_AS(summarize_external(none, "full"),
                       doctest::Contains("empty external source"),
                       std::invalid_argument);
  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 2, 4;
  CHECK_THROWS_AS(summarize_external(bad, "full"), std::invalid_argument);
}

TEST_CASE("summary validation enforces its invariants") {
  ExternalSummary s;
  s.n_external = 3;
  s.mean = Eigen::VectorXd::Zero(2);
  s.mean << 1.0, 0.5;
  CHECK_NOTHROW(s.validate());

  SUBCASE("zero external count is allowed, negative is not") {
    s.n_external = 0;
    CHECK_NOTHROW(s.validate());
    s.n_external = -1;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
  SUBCASE("intercept coordinate must be one") {
    s.mean[0] = 1.5;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
  SUBCASE("gram must be symmetric with unit corner") {
    Eigen::MatrixXd g(2, 2);
    g << 1.0, 0.5, 0.4, 1.0;
    s.gram = g;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    g(1, 0) = 0.5;
    g(0, 0) = 2.0;
    s.gram = g;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
  SUBCASE("gram must dominate the squared mean") {
    Eigen::MatrixXd g(2, 2);
    g << 1.0, 0.5, 0.5, 0.1;  // second moment below mean^2
    s.gram = g;
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("PSD"),
                         std::invalid_argument);
  }
  SUBCASE("gram_diag must match the gram diagonal") {
    Eigen::MatrixXd g(2, 2);
    g << 1.0, 0.5, 0.5, 0.9;
    s.gram = g;
    Eigen::VectorXd gd(2);
    gd << 1.0, 0.8;
    s.gram_diag = gd;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  }
}

TEST_CASE("primary dataset validation") {
  PrimaryDataset d;
  d.x = Eigen::MatrixXd::Ones(3, 2);
  d.x.col(1) << 0.5, -1.0, 2.0;
  d.y = Eigen::VectorXd::Zero(3);
  d.n_external = 4;
  CHECK_NOTHROW(d.validate());

  SUBCASE("intercept column enforced") {
    d.x(1, 0) = 0.0;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  }
  SUBCASE("treatment labels must be binary and full-length") {
    Eigen::VectorXi t(3);
    t << 0, 1, 2;
    d.treat = t;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
    t << 0, 1, 1;
    d.treat = t;
    CHECK_NOTHROW(d.validate());
  }
  SUBCASE("negative external count rejected") {
    d.n_external = -2;
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  }
}

TEST_CASE("fold plan with no external units splits labeled rows evenly") {
  FoldPlan p = make_folds(10, 0, 5, 7);
  CHECK(p.K == 5);
  for (int k = 0; k < 5; ++k) {
    CHECK(p.folds[k].labeled.size() == 2);
    CHECK(p.folds[k].external_count() == 0);
    CHECK(p.gamma_hat(k) == 1.0);
  }
}

TEST_CASE("fold plan partitions labeled and external units") {
  FoldPlan p = make_folds(4, 6, 2, 1);
  CHECK(p.folds[0].size() == 5);
  CHECK(p.folds[1].size() == 5);
  std::set<int> lab;
  std::int64_t ext = 0;
  for (const auto& f : p.folds) {
    for (int i : f.labeled) lab.insert(i);
    ext += f.external_count();
  }
  CHECK(lab.size() == 4);
  CHECK(*lab.begin() == 0);
  CHECK(*lab.rbegin() == 3);
  CHECK(ext == 6);
}

TEST_CASE("fold plans are deterministic in the seed") {
  FoldPlan a = make_folds(37, 100, 5, 42);
  FoldPlan b = make_folds(37, 100, 5, 42);
  FoldPlan c = make_folds(37, 100, 5, 43);
  bool same = true, diff = false;
  for (int k = 0; k < 5; ++k) {
    same = same && a.folds[k].labeled == b.folds[k].labeled &&
           a.folds[k].external_ids == b.folds[k].external_ids;
    diff = diff || a.folds[k].labeled != c.folds[k].labeled;
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("fold partition property holds exhaustively at small sizes") {
  Rng rng(3);
  int checked = 0;
  for (int K : {2, 5, 10}) {
    for (int trial = 0; trial < 30; ++trial) {
      const int n_lab = K + static_cast<int>(rng.uniform_int(200));
      const int n_ext = static_cast<int>(rng.uniform_int(800));
      FoldPlan p;
      try {
        p = make_folds(n_lab, n_ext, K, rng.next_u64());
      } catch (const std::runtime_error&) {
        continue;  // a sparse labeled set can land a fold empty; that throw
                   // has its own test
      }
      ++checked;
      const std::int64_t n = n_lab + n_ext;
      std::vector<int> lab_seen(n_lab, 0), ext_seen(n_ext, 0);
      std::int64_t max_sz = 0, min_sz = n + 1;
      for (const auto& f : p.folds) {
        for (int i : f.labeled) ++lab_seen[i];
        for (int e : f.external_ids) ++ext_seen[e];
        max_sz = std::max(max_sz, f.size());
        min_sz = std::min(min_sz, f.size());
      }
      for (int c : lab_seen) CHECK(c == 1);
      for (int c : ext_seen) CHECK(c == 1);
      CHECK(max_sz - min_sz <= 1);
      // Complement halves: disjoint labeled sets, sizes within 1.
      for (int k = 0; k < K; ++k) {
        const auto& comp = p.complements[k];
        std::set<int> a(comp.alpha.labeled.begin(), comp.alpha.labeled.end());
        for (int i : comp.beta.labeled) CHECK(a.count(i) == 0);
        CHECK(std::abs(comp.alpha.size() - comp.beta.size()) <= 1);
        CHECK(comp.alpha.size() + comp.beta.size() == comp.size());
      }
    }
  }
  CHECK(checked >= 60);
}

TEST_CASE("fold plan failure modes") {
  CHECK_THROWS_AS(make_folds(10, 0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_folds(2, 1, 4, 1), std::invalid_argument);
  CHECK_THROWS_WITH_AS(make_folds(1, 9, 5, 1),
                       doctest::Contains("empty labeled fold"),
                       std::runtime_error);
}

TEST_CASE("numeric csv round trip is bit exact") {
  Rng rng(88);
  Eigen::MatrixXd m(11, 3);
  for (int i = 0; i < m.size(); ++i)
    m.data()[i] = rng.normal() * std::pow(10.0, static_cast<double>(rng.uniform_int(9)) - 4.0);
  m(0, 0) = 0.1;  // not exactly representable; round trip must still match bits
  const std::string path = temp_path("summint_rt.csv");
  io::write_numeric_csv(path, {"u", "v", "w"}, m);
  std::vector<std::string> names;
  Eigen::MatrixXd back = io::read_numeric_csv(path, &names);
  REQUIRE(names.size() == 3);
  CHECK(names[1] == "v");
  REQUIRE(back.rows() == m.rows());
  CHECK((back.array() == m.array()).all());
  std::remove(path.c_str());
}

TEST_CASE("primary csv loading") {
  const std::string path = temp_path("summint_primary.csv");
  {
    std::ofstream f(path);
    f << "y,a,x1,x2,z1\n";
    f << "1.5,1,1,0.25,7\n";
    f << "-0.5,0,1,-2,8\n";
    f << "2.25,1,1,0.5,9\n";
  }
  io::LoadedPrimary lp = io::load_primary_csv(path, 5, {"z1"});
  CHECK(lp.data.n_labeled() == 3);
  CHECK(lp.data.n_external == 5);
  REQUIRE(lp.data.treat.has_value());
  CHECK((*lp.data.treat)[2] == 1);
  CHECK(lp.data.x(1, 1) == -2.0);
  CHECK(lp.data.y[2] == 2.25);
  REQUIRE(lp.z.cols() == 1);
  CHECK(lp.z(2, 0) == 9.0);
  std::remove(path.c_str());
}

TEST_CASE("primary csv rejects a broken intercept column") {
  const std::string path = temp_path("summint_badx1.csv");
  {
    std::ofstream f(path);
    f << "y,x1,x2\n1,1,2\n2,0,3\n";
  }
  CHECK_THROWS_AS(io::load_primary_csv(path, 0), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("primary csv rejects unlabeled rows smuggled in via gamma") {
  const std::string path = temp_path("summint_gamma.csv");
  {
    std::ofstream f(path);
    f << "y,gamma,x1,x2\n1,1,1,2\n2,0,1,3\n";
  }
  CHECK_THROWS_AS(io::load_primary_csv(path, 0), std::invalid_argument);
  {
    std::ofstream f(path);
    f << "y,gamma,x1,x2\n1,1,1,2\n2,1,1,3\n";
  }
  CHECK_NOTHROW(io::load_primary_csv(path, 0));
  std::remove(path.c_str());
}

TEST_CASE("summary json round trip") {
  Eigen::MatrixXd rows(4, 3);
  rows << 1, 0.5, -1, 1, 2.5, 0.25, 1, -0.125, 3, 1, 1, 1;
  ExternalSummary s = summarize_external(rows, "full");
  const std::string path = temp_path("summint_sum.json");
  io::save_summary_json(path, s);
  ExternalSummary back = io::load_summary_json(path);
  CHECK(back.n_external == 4);
  CHECK((back.mean.array() == s.mean.array()).all());
  REQUIRE(back.gram.has_value());
  CHECK((back.gram->array() == s.gram->array()).all());

  ExternalSummary lean = summarize_external(rows, "none");
  io::save_summary_json(path, lean);
  ExternalSummary back2 = io::load_summary_json(path);
  CHECK_FALSE(back2.gram.has_value());
  CHECK_FALSE(back2.gram_diag.has_value());
  std::remove(path.c_str());
}

TEST_CASE("report json uses snake_case keys") {
  EstimateReport rep;
  rep.estimand = Estimand::theta_g;
  rep.point = 1.25;
  rep.n = 10;
  rep.n_labeled = 4;
  attach_interval(rep, 2.0, VarianceSource::external_gram);
  std::string j = io::report_to_json(rep);
  for (const char* key :
       {"\"estimand\"", "\"point\"", "\"variance\"", "\"se\"", "\"ci\"",
        "\"level\"", "\"n\"", "\"n_labeled\"", "\"variance_source\"",
        "\"theta_g\"", "\"external_gram\""})
    CHECK(j.find(key) != std::string::npos);
}

TEST_CASE("interval construction matches the normal quantile") {
  EstimateReport rep;
  rep.point = 2.0;
  rep.n = 100;
  rep.level = 0.95;
  attach_interval(rep, 4.0, VarianceSource::primary_only);
  REQUIRE(rep.se.has_value());
  CHECK(*rep.se == doctest::Approx(0.2).epsilon(1e-12));
  const double z = normal_quantile(0.975);
  CHECK(rep.ci->first == doctest::Approx(2.0 - z * 0.2).epsilon(1e-12));
  CHECK(rep.ci->second == doctest::Approx(2.0 + z * 0.2).epsilon(1e-12));
  CHECK_FALSE(rep.diagnostics.variance_floored);
}

TEST_CASE("negative variance is floored with a warning") {
  EstimateReport rep;
  rep.point = 0.0;
  rep.n = 50;
  attach_interval(rep, -0.3, VarianceSource::external_gram);
  CHECK(rep.diagnostics.variance_floored);
  CHECK(*rep.variance == 1e-12);
  CHECK_FALSE(rep.diagnostics.warnings.empty());
}

TEST_CASE("median and quantile helpers") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
}
