#include "pmm/linalg.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pmm {

LdlFactors ldl_decompose(const MatrixXd& sigma) {
  const Eigen::Index p = sigma.rows();
  if (sigma.cols() != p) throw std::invalid_argument("ldl_decompose: matrix not square");
  if (!sigma.isApprox(sigma.transpose(), 1e-10))
    throw std::invalid_argument("ldl_decompose: matrix not symmetric");

  const double pivot_tol = 1e-12 * sigma.trace() / static_cast<double>(p);

  // Sigma = L Lambda L' with L unit lower triangular; then U = L^{-1}.
  MatrixXd L = MatrixXd::Identity(p, p);
  VectorXd lambda(p);
  MatrixXd S = sigma;  // running Schur complement in the trailing block
  for (Eigen::Index j = 0; j < p; ++j) {
    const double d = S(j, j);
    if (!(d > pivot_tol))
      throw std::runtime_error("ldl_decompose: non-positive pivot at visit " +
                               std::to_string(j + 1) + " (matrix not SPD)");
    lambda(j) = d;
    for (Eigen::Index i = j + 1; i < p; ++i) L(i, j) = S(i, j) / d;
    for (Eigen::Index i = j + 1; i < p; ++i)
      for (Eigen::Index k = j + 1; k <= i; ++k) S(i, k) -= L(i, j) * d * L(k, j);
  }

  LdlFactors f;
  f.L = L;
  f.lambda = lambda;
  f.U = L.triangularView<Eigen::UnitLower>().solve(MatrixXd::Identity(p, p));
  return f;
}

PatternBlocks pattern_blocks(const LdlFactors& f, int s) {
  const Eigen::Index p = f.dim();
  if (s < 0 || s >= p) throw std::invalid_argument("pattern_blocks: pattern index out of range");
  PatternBlocks b;
  b.s = s;
  b.U11 = f.U.topLeftCorner(s, s);
  b.U21 = f.U.bottomLeftCorner(p - s, s);
  b.U22 = f.U.bottomRightCorner(p - s, p - s);
  b.L22 = f.L.bottomRightCorner(p - s, p - s);
  b.lambda2 = f.lambda.tail(p - s);
  return b;
}

VectorXd draw_mvn(const VectorXd& mean, const MatrixXd& chol_factor, Rng& rng) {
  VectorXd e(mean.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = draw_std_normal(rng);
  return mean + chol_factor.triangularView<Eigen::Lower>() * e;
}

MatrixXd draw_inverse_wishart(const MatrixXd& scale, double df, Rng& rng) {
  const Eigen::Index k = scale.rows();
  if (df <= static_cast<double>(k - 1))
    throw std::invalid_argument("draw_inverse_wishart: df must exceed dimension - 1");

  Eigen::LLT<MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("draw_inverse_wishart: scale matrix not SPD");

  // W ~ Wishart(scale^{-1}, df) via Bartlett: W = C T T' C' with
  // scale^{-1} = C C'.  C = (L')^{-1} where scale = L L'.
  MatrixXd T = MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    T(i, i) = std::sqrt(draw_chisq(df - static_cast<double>(i), rng));
    for (Eigen::Index j = 0; j < i; ++j) T(i, j) = draw_std_normal(rng);
  }
  // scale^{-1} = (L')^{-1} L^{-1}; want lower Cholesky C of scale^{-1}.
  // C = (L^{-1})' is upper; instead use C solving L' C = I (C = (L')^{-1}),
  // which is upper triangular, and note C C' = scale^{-1} still holds.
  MatrixXd C = llt.matrixL().transpose().solve(MatrixXd::Identity(k, k));
  MatrixXd B = C * T;                 // W = B B'
  MatrixXd W = B * B.transpose();
  return W.llt().solve(MatrixXd::Identity(k, k));
}

}  // namespace pmm
