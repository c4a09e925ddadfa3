#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "summint/types.hpp"

namespace summint::io {

// Strictly numeric CSV with a header row. Parsing and writing use
// round-trip (shortest exact) double formatting, so load(save(m)) == m
// bitwise.
Eigen::MatrixXd read_numeric_csv(const std::string& path,
                                 std::vector<std::string>* colnames = nullptr);
void write_numeric_csv(const std::string& path,
                       const std::vector<std::string>& colnames,
                       const Eigen::MatrixXd& values);

struct LoadedPrimary {
  PrimaryDataset data;
  Eigen::MatrixXd z;  // n_labeled x |z_cols|; 0 columns when none requested
};

// Columns: y, optional a (0/1 arm), x1..xd in order (x1 is the explicit
// intercept column of ones), plus any named extra columns (e.g. smooth-part
// covariates passed via z_cols). A `gamma` column, if present, must be all
// ones: rows of the external pool never appear individually here.
LoadedPrimary load_primary_csv(const std::string& path, std::int64_t n_external,
                               const std::vector<std::string>& z_cols = {});

ExternalSummary load_summary_json(const std::string& path);
void save_summary_json(const std::string& path, const ExternalSummary& s);

std::string report_to_json(const EstimateReport& rep);
void save_report_json(const std::string& path, const EstimateReport& rep);

}  // namespace summint::io
