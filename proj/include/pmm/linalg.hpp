#pragma once

#include <Eigen/Dense>

#include "pmm/rng.hpp"

namespace pmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// LDL factorization Sigma = U^{-1} Lambda U'^{-1} with U unit lower
/// triangular (entry (j,t) = -beta_jt below the diagonal) and
/// Lambda = diag(1/gamma_1, ..., 1/gamma_p).  gamma_j is the precision of
/// visit j conditional on visits 1..j-1.
struct LdlFactors {
  MatrixXd U;           // p x p unit lower triangular, -beta below diagonal
  MatrixXd L;           // U^{-1}, also unit lower triangular
  VectorXd lambda;      // p, conditional variances 1/gamma_j
  VectorXd gamma() const { return lambda.cwiseInverse(); }
  Eigen::Index dim() const { return lambda.size(); }
  MatrixXd sigma() const { return L * lambda.asDiagonal() * L.transpose(); }
};

/// Blocks of U, L, Lambda cut at pattern s (visits 1..s vs s+1..p).
struct PatternBlocks {
  int s = 0;
  MatrixXd U11;      // s x s
  MatrixXd U21;      // (p-s) x s
  MatrixXd U22;      // (p-s) x (p-s)
  MatrixXd L22;      // U22^{-1}
  VectorXd lambda2;  // last p-s conditional variances
  /// Conditional covariance of visits s+1..p given 1..s:
  /// Sigma_{2.1^s} = L22 Lambda2 L22'.
  MatrixXd conditional_cov() const {
    return L22 * lambda2.asDiagonal() * L22.transpose();
  }
};

/// Sequential-regression LDL sweep without pivoting (visit order is fixed).
/// Throws std::runtime_error if a pivot falls below
/// 1e-12 * trace(Sigma)/p, i.e. the input is not numerically SPD.
LdlFactors ldl_decompose(const MatrixXd& sigma);

/// Cut the factors at pattern s, 0 <= s < p.
PatternBlocks pattern_blocks(const LdlFactors& f, int s);

/// mean + chol_factor * e with e iid standard normal.
VectorXd draw_mvn(const VectorXd& mean, const MatrixXd& chol_factor, Rng& rng);

/// Draw from the inverse-Wishart with the density
/// |S|^{-(df+k+1)/2} exp(-tr(scale S^{-1})/2): Bartlett decomposition of the
/// Wishart of the inverted scale, then invert.  Requires df > k-1.
MatrixXd draw_inverse_wishart(const MatrixXd& scale, double df, Rng& rng);

}  // namespace pmm
