#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmm/data.hpp"
#include "pmm/linalg.hpp"
#include "pmm/prior.hpp"
#include "pmm/rng.hpp"

namespace pmm {

/// Per-visit regression parameterization phi_y = {(theta_j, gamma_j)}:
/// y_ij | y_i1..y_i,j-1, x_i ~ N(theta_j' z_{i,j-1}, 1/gamma_j) with
/// z_{i,j-1} = (x_i', y_i1..y_i,j-1)' and
/// theta_j = (underline_alpha_j (q incl. underline_delta_j last), beta_j).
struct SequentialParams {
  int q = 0;
  std::vector<VectorXd> theta;  // theta[j-1] has length q + j - 1
  VectorXd gamma;               // p, conditional precisions

  int p() const { return static_cast<int>(gamma.size()); }
  VectorXd underline_alpha(int j) const { return theta[j - 1].head(q); }
  double underline_delta(int j) const { return theta[j - 1](q - 1); }
  VectorXd beta(int j) const { return theta[j - 1].tail(j - 1); }
  /// Unit-lower-triangular U with -beta_jt below the diagonal.
  MatrixXd U() const;
};

/// Marginal parameterization of the outcome model:
/// y_i ~ N(alpha x_i, Sigma), alpha is p x q with delta_j in the last column.
struct MarginalParams {
  MatrixXd alpha;  // p x q
  MatrixXd sigma;  // p x p SPD
  VectorXd delta() const { return alpha.rightCols(1); }
};

MarginalParams to_marginal(const SequentialParams& sp);
SequentialParams from_marginal(const MarginalParams& mp);

enum class Algorithm { MDA, FDA, AUGMENTED, SRI };

struct ChainConfig {
  int burn_in = 10000;
  int thin = 100;
  int n_draws = 0;       // = m imputations
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::MDA;
};

/// One retained posterior state: parameters plus the outcome matrix with
/// intermittent cells filled (post-dropout cells remain NaN).
struct ParamDraw {
  SequentialParams params;
  MatrixXd y_monotone;  // n x p
};

/// P-step against the monotone-completed data (rows with r_i >= j enter the
/// visit-j regression).  Draws (theta_j, gamma_j) for every visit from the
/// normal-gamma posterior.
SequentialParams mda_p_step(const TrialDataset& ds, const PatternIndex& pi,
                            const MatrixXd& y_filled, const SeqPrior& sp,
                            const PriorSpec& prior, Rng& rng);

/// I-step: redraw intermittent missing cells in y_filled from their
/// conditional normal given the observed history and phi_y.
void mda_i_step(const TrialDataset& ds, const PatternIndex& pi,
                const SequentialParams& phi, MatrixXd& y_filled, Rng& rng);

std::vector<ParamDraw> run_mda(const TrialDataset& ds, const PriorSpec& prior,
                               const ChainConfig& cfg);

std::vector<ParamDraw> run_fda(const TrialDataset& ds, const PriorSpec& prior,
                               const ChainConfig& cfg);

/// Joint-normal sampler for w_i = (x~_i', y_i')' under the matched augmented
/// prior; phi_y is extracted from the LDL factors of each Sigma_w draw.
/// When w_draws is non-null, the raw (alpha_w, Sigma_w) draws are appended
/// there (used to check prior/posterior independence of the covariate block).
std::vector<ParamDraw> run_augmented(
    const TrialDataset& ds, const PriorSpec& prior, const ChainConfig& cfg,
    std::vector<std::pair<VectorXd, MatrixXd>>* w_draws = nullptr);

/// Closed-form iid sampling for monotone data under a flat (A=0, M=0) prior.
std::vector<SequentialParams> run_sri(const TrialDataset& ds,
                                      const PriorSpec& prior,
                                      const ChainConfig& cfg);

struct DiagnosticRow {
  std::string name;
  double mean = 0.0;
  double mc_se = 0.0;
  double lag1 = 0.0;     // NaN when the sequence is constant
};

/// Column-wise chain summaries: mean, lag-1 autocorrelation, and an AR(1)
/// adjusted Monte Carlo standard error.  Requires >= 10 rows.
std::vector<DiagnosticRow> diagnostics(const MatrixXd& draws,
                                       const std::vector<std::string>& names);

/// Flatten parameter draws to a (n_draws x n_scalars) matrix; names receive
/// one label per scalar (theta<j>_<k>, gamma<j>).
MatrixXd flatten_draws(const std::vector<ParamDraw>& draws,
                       std::vector<std::string>& names);

}  // namespace pmm
