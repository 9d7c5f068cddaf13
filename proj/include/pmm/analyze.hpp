#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmm/data.hpp"
#include "pmm/impute.hpp"
#include "pmm/sampler.hpp"

namespace pmm {

struct VisitEstimate {
  int visit = 0;        // 1-based
  double estimate = 0.0;
  double variance = 0.0;
};

struct PooledResult {
  int visit = 0;
  double q_bar = 0.0;
  double W = 0.0;       // within-imputation variance
  double B = 0.0;       // between-imputation variance
  double T = 0.0;       // W + (1 + 1/m) B
  double df = 0.0;      // +inf when B = 0
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int m = 0;
};

struct MleFit {
  MarginalParams params;
  double log_lik = 0.0;
  int iterations = 0;
};

/// Maximum likelihood for y_i ~ N(alpha x_i, Sigma) via EM over the missing
/// outcome cells; converges when the relative log-likelihood increase drops
/// below tol.
MleFit fit_mle_em(const TrialDataset& ds, double tol = 1e-8, int max_iter = 5000);

/// Per-visit ANCOVA on a completed dataset: OLS of y_j on (1, x, g); the
/// treatment-effect estimate is the g coefficient.
std::vector<VisitEstimate> analyze_replicate(const ImputationReplicate& rep,
                                             const TrialDataset& ds);

/// Rubin's rules for one visit; requires m >= 2.  With B = 0 the df is +inf
/// and the interval uses the normal quantile.
PooledResult rubin_pool(const std::vector<VisitEstimate>& estimates,
                        double confidence = 0.95);

struct MethodResults {
  std::string method;
  std::vector<PooledResult> visits;
};

struct PipelineResult {
  std::vector<MethodResults> methods;
  MleFit mle;
};

/// sampler -> replicates -> per-visit analysis -> Rubin pooling.
/// MCR methods with unset flags get them from the ML fit.  Replicate
/// analysis parallelizes across replicates up to `threads`.  When keep_draws
/// or keep_reps are non-null the intermediate artifacts are copied out
/// (draw/replicate dumps from the CLI).
PipelineResult run_pipeline(const TrialDataset& ds, const PriorSpec& prior,
                            const ChainConfig& cfg,
                            std::vector<PmmMethod> methods,
                            double confidence = 0.95, int threads = 1,
                            std::vector<ParamDraw>* keep_draws = nullptr,
                            std::vector<ImputationReplicate>* keep_reps = nullptr);

void write_results_csv(const PipelineResult& res, const std::string& path);

}  // namespace pmm
