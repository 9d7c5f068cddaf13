#include "pmm/prior.hpp"

#include <stdexcept>

namespace pmm {

PriorSpec jeffreys(int p, int q) {
  PriorSpec ps;
  ps.p = p;
  ps.q = q;
  ps.A = MatrixXd::Zero(p, p);
  ps.nu0 = 0.0;
  ps.alpha0 = MatrixXd::Zero(p, q);
  ps.M = MatrixXd::Zero(q, q);
  ps.r = 0;
  return ps;
}

AugmentedPrior build_augmented(const PriorSpec& ps) {
  const int p = ps.p;
  const int q = ps.q;
  const double m11 = ps.M(0, 0);
  if (m11 < 0) throw std::invalid_argument("build_augmented: M(0,0) must be >= 0");

  const MatrixXd M22 = ps.M.bottomRightCorner(q - 1, q - 1);
  const VectorXd M21 = ps.M.bottomLeftCorner(q - 1, 1);
  // zero-structure consistency: zero diagonal of M must align with zero
  // off-diagonals and zero alpha0 columns (flat-prior covariates)
  for (int k = 0; k < q; ++k) {
    if (ps.M(k, k) == 0.0) {
      if (ps.M.row(k).cwiseAbs().sum() != 0.0 || ps.M.col(k).cwiseAbs().sum() != 0.0)
        throw std::invalid_argument(
            "build_augmented: zero-variance row/column of M has nonzero covariance");
      if (ps.alpha0.col(k).cwiseAbs().sum() != 0.0)
        throw std::invalid_argument(
            "build_augmented: alpha0 column must be zero where M is zero");
    }
  }

  MatrixXd Mstar = m11 > 0.0 ? MatrixXd(M22 - M21 * M21.transpose() / m11) : M22;
  const MatrixXd alpha0_star = ps.alpha0.rightCols(q - 1);  // p x (q-1)

  AugmentedPrior ap;
  ap.m11 = m11;
  ap.A_w.resize(q - 1 + p, q - 1 + p);
  ap.A_w.topLeftCorner(q - 1, q - 1) = Mstar;
  ap.A_w.topRightCorner(q - 1, p) = Mstar * alpha0_star.transpose();
  ap.A_w.bottomLeftCorner(p, q - 1) = alpha0_star * Mstar;
  ap.A_w.bottomRightCorner(p, p) = ps.A + alpha0_star * Mstar * alpha0_star.transpose();

  if (m11 > 0.0) {
    ap.nu_w = ps.nu0 + ps.r - q;
    VectorXd M1star = ps.alpha0.col(0) * m11 + ps.alpha0.rightCols(q - 1) * M21;  // alpha0 (m11, M21')'
    ap.alpha_w0.resize(q - 1 + p);
    ap.alpha_w0.head(q - 1) = M21 / m11;
    ap.alpha_w0.tail(p) = M1star / m11;
  } else {
    ap.nu_w = ps.nu0 + ps.r - (q - 1);
    ap.alpha_w0 = VectorXd::Zero(q - 1 + p);
  }
  return ap;
}

SeqPrior seq_prior_params(const PriorSpec& ps) {
  const int p = ps.p;
  const int q = ps.q;
  SeqPrior sp;
  sp.exponent.resize(p);
  sp.quad_form.resize(p);
  for (int j = 1; j <= p; ++j) {
    sp.exponent[j - 1] = (ps.nu0 + 2.0 * j + ps.r - p - 3.0) / 2.0;
    // A~_j: leading (q+j) block of blockdiag(0_q, A)
    MatrixXd Aj = MatrixXd::Zero(q + j, q + j);
    Aj.bottomRightCorner(j, j) = ps.A.topLeftCorner(j, j);
    // B_j = a"_j' M a"_j with a"_j = (I_q, alpha0 rows 1..j as columns)
    MatrixXd addot(q, q + j);
    addot.leftCols(q) = MatrixXd::Identity(q, q);
    addot.rightCols(j) = ps.alpha0.topRows(j).transpose();
    sp.quad_form[j - 1] = Aj + addot.transpose() * ps.M * addot;
  }
  return sp;
}

}  // namespace pmm
