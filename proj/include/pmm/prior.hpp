#pragma once

#include <vector>

#include <Eigen/Dense>

namespace pmm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Normal-inverse-Wishart prior on (alpha, Sigma):
/// Sigma ~ IW(A, nu0), vec(alpha) | Sigma ~ N(vec(alpha0), M^+ (x) Sigma).
/// A and M are symmetric PSD (not necessarily PD); flat-prior covariates
/// correspond to zero rows/columns of M and matching zero columns of alpha0.
struct PriorSpec {
  int p = 0;
  int q = 0;
  MatrixXd A;        // p x p
  double nu0 = 0.0;
  MatrixXd alpha0;   // p x q prior mean of alpha
  MatrixXd M;        // q x q
  int r = 0;         // rank of M
};

/// NIW prior on (alpha_w, Sigma_w) for the joint-normal view of
/// w_i = (x~_i', y_i')', built from a PriorSpec so that the implied prior on
/// phi_y matches the sequential normal-gamma prior.
struct AugmentedPrior {
  MatrixXd A_w;        // (q-1+p) x (q-1+p)
  double nu_w = 0.0;
  VectorXd alpha_w0;   // q-1+p
  double m11 = 0.0;
};

/// Per-visit normal-gamma prior factors for (theta_j, gamma_j):
/// f(theta_j, gamma_j) propto gamma^{exponent_j} exp(-gamma/2 t' Q_j t)
/// with t = (-theta_j', 1)' and Q_j = A~_j + B_j, a (q+j) x (q+j) matrix.
struct SeqPrior {
  std::vector<double> exponent;     // (nu0 + 2j + r - p - 3)/2, j = 1..p
  std::vector<MatrixXd> quad_form;  // A~_j + B_j
};

PriorSpec jeffreys(int p, int q);

AugmentedPrior build_augmented(const PriorSpec& ps);

SeqPrior seq_prior_params(const PriorSpec& ps);

}  // namespace pmm
