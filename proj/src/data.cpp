#include "pmm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pmm/linalg.hpp"

namespace pmm {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

double parse_number(const std::string& s, const std::string& what, int row) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("load_csv: non-numeric " + what + " '" + s +
                             "' at row " + std::to_string(row));
  }
}

}  // namespace

VectorXd TrialDataset::design_row(int i) const {
  VectorXd x(q());
  x(0) = 1.0;
  x.segment(1, d_covariates) = covariates.row(i);
  x(q() - 1) = static_cast<double>(arm(i));
  return x;
}

bool PatternIndex::is_monotone() const {
  return std::all_of(intermittent.begin(), intermittent.end(),
                     [](const std::vector<int>& v) { return v.empty(); });
}

TrialDataset load_csv(const std::string& path, int p, int d) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> expected = {"subject_id", "arm"};
  for (int k = 1; k <= d; ++k) expected.push_back("x" + std::to_string(k));
  for (int j = 1; j <= p; ++j) expected.push_back("y" + std::to_string(j));
  auto header = split_line(line);
  if (header != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i)
      want += (i ? "," : "") + expected[i];
    throw std::runtime_error("load_csv: malformed header in '" + path +
                             "', expected '" + want + "'");
  }

  TrialDataset ds;
  ds.p_visits = p;
  ds.d_covariates = d;
  std::vector<int> arms;
  std::vector<VectorXd> xs;
  std::vector<VectorXd> ys;
  std::vector<std::vector<bool>> masks;

  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (static_cast<int>(cells.size()) != 2 + d + p)
      throw std::runtime_error("load_csv: row " + std::to_string(row) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(2 + d + p));
    ds.subject_ids.push_back(cells[0]);
    if (is_missing_token(cells[1]))
      throw std::runtime_error("load_csv: missing arm at row " + std::to_string(row));
    double a = parse_number(cells[1], "arm", row);
    if (a != 0.0 && a != 1.0)
      throw std::runtime_error("load_csv: arm must be 0 or 1 at row " + std::to_string(row));
    arms.push_back(static_cast<int>(a));

    VectorXd x(d);
    for (int k = 0; k < d; ++k) {
      const std::string& c = cells[2 + k];
      if (is_missing_token(c))
        throw std::runtime_error("load_csv: missing covariate x" + std::to_string(k + 1) +
                                 " at row " + std::to_string(row));
      x(k) = parse_number(c, "covariate", row);
    }
    xs.push_back(x);

    VectorXd y(p);
    std::vector<bool> m(p);
    for (int j = 0; j < p; ++j) {
      const std::string& c = cells[2 + d + j];
      if (is_missing_token(c)) {
        y(j) = std::numeric_limits<double>::quiet_NaN();
        m[j] = false;
      } else {
        y(j) = parse_number(c, "outcome", row);
        m[j] = true;
      }
    }
    ys.push_back(y);
    masks.push_back(m);
  }

  const int n = static_cast<int>(arms.size());
  ds.n_subjects = n;
  ds.arm.resize(n);
  ds.covariates.resize(n, d);
  ds.outcomes.resize(n, p);
  ds.observed.resize(n, p);
  for (int i = 0; i < n; ++i) {
    ds.arm(i) = arms[i];
    ds.covariates.row(i) = xs[i];
    ds.outcomes.row(i) = ys[i];
    for (int j = 0; j < p; ++j) ds.observed(i, j) = masks[i][j];
  }
  return ds;
}

void write_csv(const TrialDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "'");
  out.precision(17);
  out << "subject_id,arm";
  for (int k = 1; k <= ds.d_covariates; ++k) out << ",x" << k;
  for (int j = 1; j <= ds.p_visits; ++j) out << ",y" << j;
  out << "\n";
  for (int i = 0; i < ds.n_subjects; ++i) {
    out << ds.subject_ids[i] << "," << ds.arm(i);
    for (int k = 0; k < ds.d_covariates; ++k) out << "," << ds.covariates(i, k);
    for (int j = 0; j < ds.p_visits; ++j) {
      out << ",";
      if (ds.observed(i, j)) out << ds.outcomes(i, j);
    }
    out << "\n";
  }
}

PatternIndex index_patterns(const TrialDataset& ds) {
  const int n = ds.n_subjects;
  const int p = ds.p_visits;
  PatternIndex pi;
  pi.dropout.resize(n);
  pi.intermittent.resize(n);
  pi.post_dropout.resize(n);
  for (int i = 0; i < n; ++i) {
    int r = 0;
    for (int j = 0; j < p; ++j)
      if (ds.observed(i, j)) r = j + 1;
    pi.dropout[i] = r;
    for (int j = 0; j < r - 1; ++j)
      if (!ds.observed(i, j)) pi.intermittent[i].push_back(j);
    for (int j = r; j < p; ++j) pi.post_dropout[i].push_back(j);
  }
  pi.n_j.resize(p);
  for (int j = 0; j < p; ++j)
    pi.n_j[j] = static_cast<int>(
        std::count_if(pi.dropout.begin(), pi.dropout.end(),
                      [j](int r) { return r >= j + 1; }));
  pi.sort_order.resize(n);
  std::iota(pi.sort_order.begin(), pi.sort_order.end(), 0);
  std::stable_sort(pi.sort_order.begin(), pi.sort_order.end(),
                   [&pi](int a, int b) { return pi.dropout[a] > pi.dropout[b]; });
  return pi;
}

TrialDataset simulate_trial(const SimSpec& spec, std::uint64_t seed) {
  const int n = spec.n_subjects;
  const int p = spec.p_visits;
  const int d = spec.d_covariates;
  const int q = d + 2;
  if (spec.alpha.rows() != p || spec.alpha.cols() != q)
    throw std::invalid_argument("simulate_trial: alpha must be p x q");
  LdlFactors f = ldl_decompose(spec.sigma);  // throws if not SPD
  MatrixXd chol = spec.sigma.llt().matrixL();

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  TrialDataset ds;
  ds.n_subjects = n;
  ds.p_visits = p;
  ds.d_covariates = d;
  ds.arm.resize(n);
  ds.covariates.resize(n, d);
  ds.outcomes.resize(n, p);
  ds.observed.resize(n, p);

  const int n_active = static_cast<int>(std::lround(spec.active_fraction * n));
  for (int i = 0; i < n; ++i) {
    ds.subject_ids.push_back("S" + std::to_string(i + 1));
    ds.arm(i) = i < n_active ? 1 : 0;
    for (int k = 0; k < d; ++k) ds.covariates(i, k) = draw_std_normal(rng);
    VectorXd mean = spec.alpha * ds.design_row(i);
    ds.outcomes.row(i) = draw_mvn(mean, chol, rng);
    for (int j = 0; j < p; ++j) ds.observed(i, j) = true;
  }

  for (int i = 0; i < n; ++i) {
    // dp[j-1] = P(missing from visit j onward | still in study before visit j)
    const auto& dp = ds.arm(i) == 1 ? spec.dropout_prob_active : spec.dropout_prob_control;
    int r = p;
    for (int j = 1; j <= p; ++j) {
      double pr = dp.empty() ? 0.0 : dp[static_cast<std::size_t>(j - 1)];
      if (unif(rng) < pr) { r = j - 1; break; }
    }
    for (int j = r; j < p; ++j) {
      ds.outcomes(i, j) = std::numeric_limits<double>::quiet_NaN();
      ds.observed(i, j) = false;
    }
    // intermittent gaps strictly before the last observed visit
    for (int j = 0; j < r - 1; ++j) {
      if (unif(rng) < spec.intermittent_prob) {
        ds.outcomes(i, j) = std::numeric_limits<double>::quiet_NaN();
        ds.observed(i, j) = false;
      }
    }
  }
  return ds;
}

}  // namespace pmm
