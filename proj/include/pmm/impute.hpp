#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmm/data.hpp"
#include "pmm/sampler.hpp"

namespace pmm {

enum class MethodTag { MAR, J2R, CIR, CR, ECR, MCR, CDELTA, UDELTA };

enum class DeltaVariant { FirstVisit, AllVisits };

/// Pattern-mixture method descriptor.  Deltas follow the subtraction
/// convention: imputed = MAR-imputed - shift, so a negative delta makes the
/// imputed outcomes larger (worse when lower scores mean improvement).
struct PmmMethod {
  MethodTag tag = MethodTag::MAR;
  double phi = 0.0;                            // ECR, in [0,1]
  VectorXd delta_c;                            // CDELTA, per-visit values
  DeltaVariant variant = DeltaVariant::FirstVisit;  // CDELTA
  VectorXd delta_u;                            // UDELTA, per-visit values
  VectorXi mcr_flags;                          // MCR, d_j in {0,1}

  std::string label() const;
  static PmmMethod mar() { return {}; }
  static PmmMethod j2r() { return {MethodTag::J2R}; }
  static PmmMethod cir() { return {MethodTag::CIR}; }
  static PmmMethod cr() { return {MethodTag::CR}; }
  static PmmMethod ecr(double phi);
  static PmmMethod mcr(VectorXi flags);
  static PmmMethod cdelta(VectorXd delta, DeltaVariant v);
  static PmmMethod udelta(VectorXd delta);
};

/// One completed dataset: observed cells identical to the input; an index
/// back to the posterior draw that produced it.
struct ImputationReplicate {
  MatrixXd outcomes;   // n x p, complete
  std::string method;
  int replicate = 0;
  int source_draw = 0;
};

/// MAR imputation of visits s+1..p in matrix form:
/// y_m2 = L22 (mu2 + delta2 g - U21 y_1..s + Lambda2^{1/2} e).
VectorXd impute_mar(const VectorXd& x, int g, const VectorXd& y_head, int s,
                    const SequentialParams& phi, const PatternBlocks& blocks,
                    const VectorXd& e);

/// The (p-s)-vector subtracted from the MAR imputation for a method in
/// pattern s, arm g.  Zero for MAR and for every control-arm subject.
VectorXd pmm_shift(const PmmMethod& method, int s, int g,
                   const SequentialParams& phi, const PatternBlocks& blocks);

/// d_j = 0 if underline_delta_hat_j * delta_hat_p >= 0, else 1, computed
/// from maximum likelihood estimates once before imputation.
VectorXi mcr_flags(const MarginalParams& mle);

/// Couples all methods to one MAR draw: per posterior draw, intermittent
/// cells come from the draw's I-step state and one standard-normal vector
/// per subject is shared across methods.
std::vector<ImputationReplicate> build_replicates(
    const TrialDataset& ds, const PatternIndex& pi,
    const std::vector<ParamDraw>& draws, const std::vector<PmmMethod>& methods,
    Rng& rng);

}  // namespace pmm
