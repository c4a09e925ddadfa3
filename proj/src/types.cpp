#include "summint/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "summint/stats.hpp"

namespace summint {

void ExternalSummary::validate() const {
  const Eigen::Index d = mean.size();
  if (n_external < 0) throw std::invalid_argument("summary: n_external must be nonnegative");
  if (d < 1) throw std::invalid_argument("summary: empty mean vector");
  if (!mean.allFinite() || (gram && !gram->allFinite()) ||
      (gram_diag && !gram_diag->allFinite()))
    throw std::invalid_argument("summary: non-finite entries");
  if (mean[0] != 1.0)
    throw std::invalid_argument("summary: intercept slot of mean must equal 1");
  if (gram) {
    if (gram->rows() != d || gram->cols() != d)
      throw std::invalid_argument("summary: gram dimension mismatch");
    double asym = (*gram - gram->transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * (1.0 + gram->cwiseAbs().maxCoeff()))
      throw std::invalid_argument("summary: gram matrix is not symmetric");
    if (std::abs((*gram)(0, 0) - 1.0) > 1e-12)
      throw std::invalid_argument("summary: gram intercept entry must equal 1");
    // A valid second moment dominates the squared mean: gram - mean meanT is a
    // sample covariance and must be PSD (up to rounding).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*gram - mean * mean.transpose(),
                                                      Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + gram->cwiseAbs().maxCoeff()))
      throw std::invalid_argument("summary: gram is not consistent with mean (covariance not PSD)");
  }
  if (gram_diag) {
    if (gram_diag->size() != d)
      throw std::invalid_argument("summary: gram_diag dimension mismatch");
    if (gram && (gram->diagonal() - *gram_diag).cwiseAbs().maxCoeff() >
                    1e-10 * (1.0 + gram_diag->cwiseAbs().maxCoeff()))
      throw std::invalid_argument("summary: gram_diag disagrees with gram diagonal");
  }
}

void PrimaryDataset::validate() const {
  if (x.rows() == 0) throw std::invalid_argument("primary data: no labeled rows");
  if (y.size() != x.rows())
    throw std::invalid_argument("primary data: y length mismatch");
  if (!y.allFinite()) throw std::invalid_argument("primary data: non-finite y");
  if (!x.allFinite()) throw std::invalid_argument("primary data: non-finite x");
  if ((x.col(0).array() != 1.0).any())
    throw std::invalid_argument("primary data: column 0 must be the constant 1");
  if (n_external < 0)
    throw std::invalid_argument("primary data: negative external count");
  if (treat) {
    if (treat->size() != x.rows())
      throw std::invalid_argument("primary data: treatment length mismatch");
    if (((treat->array() != 0) && (treat->array() != 1)).any())
      throw std::invalid_argument("primary data: treatment labels must be 0/1");
  }
}

ExternalSummary summarize_external(const Eigen::MatrixXd& rows, const std::string& moments) {
  if (rows.rows() == 0) throw std::invalid_argument("summarize: empty external source");
  if ((rows.col(0).array() != 1.0).any())
    throw std::invalid_argument("summarize: column 0 must be the constant 1");

  // Accumulate in canonical (lexicographic) row order so that any
  // permutation of the same rows yields a bit-identical summary.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (rows(a, j) < rows(b, j)) return true;
      if (rows(a, j) > rows(b, j)) return false;
    }
    return false;
  });
  Eigen::MatrixXd sorted(rows.rows(), rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    sorted.row(i) = rows.row(order[static_cast<std::size_t>(i)]);

  ExternalSummary s;
  s.n_external = rows.rows();
  const double m = static_cast<double>(rows.rows());
  s.mean = (sorted.colwise().sum() / m).transpose();
  s.mean[0] = 1.0;  // exact, not up to rounding
  if (moments == "full") {
    s.gram = (sorted.transpose() * sorted) / m;
    (*s.gram)(0, 0) = 1.0;
    s.gram_diag = s.gram->diagonal();
  } else if (moments == "diag") {
    s.gram_diag = (sorted.cwiseProduct(sorted).colwise().sum() / m).transpose();
    (*s.gram_diag)[0] = 1.0;
  } else if (moments != "none") {
    throw std::invalid_argument("summarize: moments must be full, diag, or none");
  }
  s.validate();
  return s;
}

std::string to_string(Estimand e) {
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

std::string to_string(VarianceSource s) {
  switch (s) {
    case VarianceSource::external_gram: return "external_gram";
    case VarianceSource::primary_only: return "primary_only";
    case VarianceSource::conservative_diag: return "conservative_diag";
    case VarianceSource::unavailable: return "unavailable";
  }
  return "?";
}

void attach_interval(EstimateReport& rep, double variance, VarianceSource source,
                     double floor_at) {
  if (!(variance > floor_at)) {
    rep.diagnostics.variance_floored = true;
    rep.diagnostics.warnings.push_back("variance floored at " + std::to_string(floor_at));
    variance = floor_at;
  }
  rep.variance = variance;
  double se = std::sqrt(variance / static_cast<double>(rep.n));
  rep.se = se;
  double z = normal_quantile(0.5 + rep.level / 2.0);
  rep.ci = {rep.point - z * se, rep.point + z * se};
  rep.diagnostics.variance_source = source;
}

}  // namespace summint
