#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmm/rng.hpp"

namespace pmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

/// Longitudinal two-arm trial: n subjects, p post-baseline visits, d fully
/// observed baseline covariates.  Outcomes may be missing; covariates and
/// arm may not.  Immutable after construction.
struct TrialDataset {
  int n_subjects = 0;
  int p_visits = 0;
  int d_covariates = 0;
  std::vector<std::string> subject_ids;                 // n
  VectorXi arm;                                         // n, 0 control / 1 active
  MatrixXd covariates;                                  // n x d
  MatrixXd outcomes;                                    // n x p (NaN where missing)
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed;  // n x p

  int q() const { return d_covariates + 2; }
  /// Design row x_i = (1, x_i1..x_id, g_i).
  VectorXd design_row(int i) const;
};

/// Dropout / missingness bookkeeping for one dataset.
struct PatternIndex {
  std::vector<int> dropout;                  // r_i in {0..p}: last observed visit
  std::vector<int> sort_order;               // subject indices, descending r_i
  std::vector<int> n_j;                      // per visit j (0-based): #{i : r_i >= j+1}
  std::vector<std::vector<int>> intermittent;   // missing visits < r_i (0-based)
  std::vector<std::vector<int>> post_dropout;   // visits > r_i (0-based)

  bool is_monotone() const;
  bool has_intermittent(int i) const { return !intermittent[i].empty(); }
};

/// Generating model for synthetic trials used in tests.
struct SimSpec {
  int n_subjects = 0;
  int p_visits = 0;
  int d_covariates = 0;
  double active_fraction = 0.5;
  MatrixXd alpha;               // p x q true coefficients
  MatrixXd sigma;               // p x p true SPD covariance
  // P(drop after visit j | reached visit j), per arm; size p each.
  // dropout_prob[arm][j-1]; a subject dropping after visit j has r_i = j.
  std::vector<double> dropout_prob_control;
  std::vector<double> dropout_prob_active;
  double intermittent_prob = 0.0;   // per pre-dropout cell (never the last observed)
};

/// Wide CSV, one row per subject: subject_id,arm,x1..xd,y1..yp.
/// Empty cell or literal NA marks a missing outcome; missing covariates or
/// arm are a hard error.
TrialDataset load_csv(const std::string& path, int p, int d);

/// Emits the same schema; NaN outcome cells are written empty.
void write_csv(const TrialDataset& ds, const std::string& path);

PatternIndex index_patterns(const TrialDataset& ds);

/// Draws outcomes from the multivariate normal model, applies monotone
/// dropout and intermittent missingness.  Deterministic under fixed seed.
TrialDataset simulate_trial(const SimSpec& spec, std::uint64_t seed);

}  // namespace pmm
