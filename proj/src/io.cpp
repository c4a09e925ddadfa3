#include "summint/io.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <system_error>

#include "json.hpp"

using ordered_json = nlohmann::ordered_json;

namespace summint::io {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    std::string cell = line.substr(start, comma == std::string::npos
                                              ? std::string::npos
                                              : comma - start);
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& cell, std::size_t line_no) {
  double v = 0.0;
  const char* b = cell.data();
  const char* e = b + cell.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e)
    throw std::invalid_argument("csv: bad numeric cell '" + cell + "' on line " +
                                std::to_string(line_no));
  return v;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("csv: formatting failed");
  return std::string(buf, ptr);
}

}  // namespace

Eigen::MatrixXd read_numeric_csv(const std::string& path,
                                 std::vector<std::string>* colnames) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("csv: empty file " + path);
  std::vector<std::string> header = split_line(line);
  const std::size_t ncol = header.size();
  if (colnames) *colnames = header;

  std::vector<double> cells;
  std::size_t nrow = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> parts = split_line(line);
    if (parts.size() != ncol)
      throw std::invalid_argument("csv: line " + std::to_string(line_no) + " has " +
                                  std::to_string(parts.size()) + " cells, expected " +
                                  std::to_string(ncol));
    for (const auto& c : parts) cells.push_back(parse_double(c, line_no));
    ++nrow;
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(nrow), static_cast<Eigen::Index>(ncol));
  for (std::size_t i = 0; i < nrow; ++i)
    for (std::size_t j = 0; j < ncol; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cells[i * ncol + j];
  return m;
}

void write_numeric_csv(const std::string& path, const std::vector<std::string>& colnames,
                       const Eigen::MatrixXd& values) {
  if (static_cast<Eigen::Index>(colnames.size()) != values.cols())
    throw std::invalid_argument("csv: header width does not match data");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t j = 0; j < colnames.size(); ++j)
    out << (j ? "," : "") << colnames[j];
  out << "\n";
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out << (j ? "," : "") << format_double(values(i, j));
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

LoadedPrimary load_primary_csv(const std::string& path, std::int64_t n_external,
                               const std::vector<std::string>& z_cols) {
  std::vector<std::string> names;
  Eigen::MatrixXd table = read_numeric_csv(path, &names);

  auto col_index = [&](const std::string& name) -> Eigen::Index {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return static_cast<Eigen::Index>(j);
    return -1;
  };

  Eigen::Index ycol = col_index("y");
  if (ycol < 0) throw std::invalid_argument("primary csv: missing column y");
  Eigen::Index acol = col_index("a");
  Eigen::Index gcol = col_index("gamma");

  // x1..xd must be present contiguously from 1
  std::vector<Eigen::Index> xcols;
  for (int j = 1;; ++j) {
    Eigen::Index c = col_index("x" + std::to_string(j));
    if (c < 0) break;
    xcols.push_back(c);
  }
  if (xcols.empty()) throw std::invalid_argument("primary csv: no x1..xd columns");

  const Eigen::Index n = table.rows();
  if (n == 0) throw std::invalid_argument("primary csv: no data rows");

  LoadedPrimary out;
  out.data.x.resize(n, static_cast<Eigen::Index>(xcols.size()));
  for (std::size_t j = 0; j < xcols.size(); ++j)
    out.data.x.col(static_cast<Eigen::Index>(j)) = table.col(xcols[j]);
  out.data.y = table.col(ycol);
  out.data.n_external = n_external;

  if (acol >= 0) {
    Eigen::VectorXi a(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = table(i, acol);
      if (v != 0.0 && v != 1.0)
        throw std::invalid_argument("primary csv: column a must be 0/1");
      a[i] = static_cast<int>(v);
    }
    out.data.treat = a;
  }
  if (gcol >= 0 && (table.col(gcol).array() != 1.0).any())
    throw std::invalid_argument(
        "primary csv: gamma column has zeros; unlabeled units enter only through "
        "the external summary and --n-external");

  out.data.validate();

  out.z.resize(n, static_cast<Eigen::Index>(z_cols.size()));
  for (std::size_t j = 0; j < z_cols.size(); ++j) {
    Eigen::Index c = col_index(z_cols[j]);
    if (c < 0)
      throw std::invalid_argument("primary csv: missing smooth-part column " + z_cols[j]);
    out.z.col(static_cast<Eigen::Index>(j)) = table.col(c);
  }
  return out;
}

ExternalSummary load_summary_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument("summary json: parse error in " + path + ": " + e.what());
  }
  ExternalSummary s;
  if (!j.contains("n_external") || !j.contains("mean"))
    throw std::invalid_argument("summary json: need n_external and mean");
  s.n_external = j.at("n_external").get<std::int64_t>();
  std::vector<double> mean = j.at("mean").get<std::vector<double>>();
  s.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  if (j.contains("gram") && !j.at("gram").is_null()) {
    auto rows = j.at("gram").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd g(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.empty() ? 0 : rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != g.cols())
        throw std::invalid_argument("summary json: ragged gram");
      for (std::size_t k = 0; k < rows[i].size(); ++k)
        g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    s.gram = g;
  }
  if (j.contains("gram_diag") && !j.at("gram_diag").is_null()) {
    std::vector<double> d = j.at("gram_diag").get<std::vector<double>>();
    s.gram_diag = Eigen::Map<Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
  }
  s.validate();
  return s;
}

void save_summary_json(const std::string& path, const ExternalSummary& s) {
  s.validate();
  ordered_json j;
  j["n_external"] = s.n_external;
  j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
  if (s.gram) {
    std::vector<std::vector<double>> g;
    for (Eigen::Index i = 0; i < s.gram->rows(); ++i)
      g.emplace_back(s.gram->row(i).begin(), s.gram->row(i).end());
    j["gram"] = g;
  }
  if (s.gram_diag)
    j["gram_diag"] =
        std::vector<double>(s.gram_diag->data(), s.gram_diag->data() + s.gram_diag->size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string report_to_json(const EstimateReport& rep) {
  ordered_json j;
  j["estimand"] = to_string(rep.estimand);
  j["point"] = rep.point;
  if (rep.variance) j["variance"] = *rep.variance;
  if (rep.se) j["se"] = *rep.se;
  if (rep.ci) j["ci"] = {rep.ci->first, rep.ci->second};
  j["level"] = rep.level;
  j["n"] = rep.n;
  j["n_labeled"] = rep.n_labeled;
  ordered_json diag;
  diag["variance_source"] = to_string(rep.diagnostics.variance_source);
  diag["variance_floored"] = rep.diagnostics.variance_floored;
  if (rep.diagnostics.arm1_point) diag["arm1_point"] = *rep.diagnostics.arm1_point;
  if (rep.diagnostics.arm0_point) diag["arm0_point"] = *rep.diagnostics.arm0_point;
  ordered_json fits = ordered_json::array();
  for (const auto& f : rep.diagnostics.fits) {
    ordered_json jf;
    jf["fold"] = f.fold;
    if (f.arm >= 0) jf["arm"] = f.arm;
    jf["role"] = f.role;
    jf["lambda"] = f.lambda;
    jf["support_size"] = f.support_size;
    jf["iterations"] = f.iterations;
    jf["converged"] = f.converged;
    if (f.clamped) jf["clamped"] = true;
    fits.push_back(jf);
  }
  diag["fits"] = fits;
  diag["warnings"] = rep.diagnostics.warnings;
  j["diagnostics"] = diag;
  return j.dump(2);
}

void save_report_json(const std::string& path, const EstimateReport& rep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << report_to_json(rep) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace summint::io
