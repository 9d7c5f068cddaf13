#include "pmm/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace pmm {

namespace {

// z_{ij} = (x_i', y_i1..y_ij)', length q + j
VectorXd z_vector(const TrialDataset& ds, const MatrixXd& y, int i, int j) {
  const int q = ds.q();
  VectorXd z(q + j);
  z.head(q) = ds.design_row(i);
  for (int t = 0; t < j; ++t) z(q + t) = y(i, t);
  return z;
}

// Draw (theta_j, gamma_j) from gamma^{e} exp(-gamma/2 t' D t), t = (-theta',1)'.
// e already includes the data contribution n_used/2.
void draw_normal_gamma(const MatrixXd& D, double exponent, int j, Rng& rng,
                       VectorXd& theta, double& gamma) {
  const Eigen::Index k = D.rows() - 1;
  const MatrixXd D11 = D.topLeftCorner(k, k);
  const VectorXd d12 = D.topRightCorner(k, 1);
  const double d22 = D(k, k);

  Eigen::LLT<MatrixXd> llt(D11);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("p_step: singular design at visit " + std::to_string(j) +
                             " (too few subjects for the flat prior)");
  const VectorXd theta_hat = llt.solve(d12);
  const double S = d22 - d12.dot(theta_hat);
  const double shape = exponent - static_cast<double>(k) / 2.0 + 1.0;
  if (!(shape > 0.0))
    throw std::runtime_error("p_step: nonpositive gamma shape at visit " +
                             std::to_string(j) + " (insufficient data)");
  if (!(S > 0.0))
    throw std::runtime_error("p_step: nonpositive residual at visit " + std::to_string(j));
  gamma = draw_gamma(shape, 2.0 / S, rng);

  // theta | gamma ~ N(theta_hat, (gamma D11)^{-1}); D11 = L L'
  VectorXd e(k);
  for (Eigen::Index t = 0; t < k; ++t) e(t) = draw_std_normal(rng);
  theta = theta_hat +
          llt.matrixL().transpose().solve(e) / std::sqrt(gamma);
}

SequentialParams p_step(const TrialDataset& ds, const PatternIndex& pi,
                        const MatrixXd& y_filled, const SeqPrior& sp,
                        const PriorSpec& prior, bool full_data, Rng& rng) {
  const int p = ds.p_visits;
  const int q = ds.q();
  SequentialParams out;
  out.q = q;
  out.theta.resize(p);
  out.gamma.resize(p);
  for (int j = 1; j <= p; ++j) {
    MatrixXd D = sp.quad_form[j - 1];
    int n_used = 0;
    for (int i = 0; i < ds.n_subjects; ++i) {
      if (!full_data && pi.dropout[i] < j) continue;
      VectorXd z = z_vector(ds, y_filled, i, j);
      D.selfadjointView<Eigen::Lower>().rankUpdate(z);
      ++n_used;
    }
    D = D.selfadjointView<Eigen::Lower>();
    const double exponent = sp.exponent[j - 1] + n_used / 2.0;
    VectorXd theta;
    double gamma = 0.0;
    draw_normal_gamma(D, exponent, j, rng, theta, gamma);
    out.theta[j - 1] = theta;
    out.gamma(j - 1) = gamma;
  }
  (void)prior;
  return out;
}

// Start value for a missing cell: LOCF within subject, else the observed
// column mean.
MatrixXd initial_fill(const TrialDataset& ds, bool fill_post_dropout) {
  const int n = ds.n_subjects, p = ds.p_visits;
  VectorXd col_mean = VectorXd::Zero(p);
  for (int j = 0; j < p; ++j) {
    double s = 0.0;
    int c = 0;
    for (int i = 0; i < n; ++i)
      if (ds.observed(i, j)) { s += ds.outcomes(i, j); ++c; }
    col_mean(j) = c > 0 ? s / c : 0.0;
  }
  PatternIndex pi = index_patterns(ds);
  MatrixXd y = ds.outcomes;
  for (int i = 0; i < n; ++i) {
    const int r = pi.dropout[i];
    double last = col_mean(0);
    for (int j = 0; j < p; ++j) {
      if (!fill_post_dropout && j >= r) break;
      if (ds.observed(i, j)) last = y(i, j);
      else y(i, j) = (j == 0 && !ds.observed(i, 0)) ? col_mean(0) : last;
    }
  }
  return y;
}

// Sequential MAR draw of post-dropout cells for one subject (FDA I-step).
void impute_post_dropout_seq(const TrialDataset& ds, int i, int r,
                             const SequentialParams& phi, MatrixXd& y, Rng& rng) {
  const int p = ds.p_visits;
  for (int j = r + 1; j <= p; ++j) {
    VectorXd z = z_vector(ds, y, i, j - 1);
    const double mu = phi.theta[j - 1].dot(z);
    y(i, j - 1) = mu + draw_std_normal(rng) / std::sqrt(phi.gamma(j - 1));
  }
}

void strip_post_dropout(const PatternIndex& pi, MatrixXd& y) {
  for (int i = 0; i < y.rows(); ++i)
    for (int j = pi.dropout[i]; j < y.cols(); ++j)
      y(i, j) = std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

MatrixXd SequentialParams::U() const {
  const int pv = p();
  MatrixXd u = MatrixXd::Identity(pv, pv);
  for (int j = 2; j <= pv; ++j) u.row(j - 1).head(j - 1) = -beta(j).transpose();
  return u;
}

MarginalParams to_marginal(const SequentialParams& sp) {
  const int p = sp.p();
  const MatrixXd U = sp.U();
  const MatrixXd L = U.triangularView<Eigen::UnitLower>().solve(MatrixXd::Identity(p, p));
  MatrixXd underline_a(p, sp.q);
  for (int j = 1; j <= p; ++j) underline_a.row(j - 1) = sp.underline_alpha(j).transpose();
  MarginalParams mp;
  mp.alpha = L * underline_a;
  mp.sigma = L * sp.gamma.cwiseInverse().asDiagonal() * L.transpose();
  return mp;
}

SequentialParams from_marginal(const MarginalParams& mp) {
  const int p = static_cast<int>(mp.sigma.rows());
  const int q = static_cast<int>(mp.alpha.cols());
  LdlFactors f = ldl_decompose(mp.sigma);
  const MatrixXd underline_a = f.U * mp.alpha;
  SequentialParams sp;
  sp.q = q;
  sp.gamma = f.gamma();
  sp.theta.resize(p);
  for (int j = 1; j <= p; ++j) {
    VectorXd th(q + j - 1);
    th.head(q) = underline_a.row(j - 1);
    for (int t = 0; t < j - 1; ++t) th(q + t) = -f.U(j - 1, t);
    sp.theta[j - 1] = th;
  }
  return sp;
}

SequentialParams mda_p_step(const TrialDataset& ds, const PatternIndex& pi,
                            const MatrixXd& y_filled, const SeqPrior& sp,
                            const PriorSpec& prior, Rng& rng) {
  return p_step(ds, pi, y_filled, sp, prior, /*full_data=*/false, rng);
}

void mda_i_step(const TrialDataset& ds, const PatternIndex& pi,
                const SequentialParams& phi, MatrixXd& y_filled, Rng& rng) {
  const int q = ds.q();
  for (int i = 0; i < ds.n_subjects; ++i) {
    const auto& miss = pi.intermittent[i];
    if (miss.empty()) continue;
    const int r = pi.dropout[i];          // 1-based last observed visit
    const int h = miss.front() + 1;       // 1-based first missing visit
    const int w = r - h + 1;              // window of visits h..r
    const int nm = static_cast<int>(miss.size());
    const VectorXd x = ds.design_row(i);

    MatrixXd prec = MatrixXd::Zero(nm, nm);
    VectorXd rhs = VectorXd::Zero(nm);
    for (int j = h; j <= r; ++j) {
      // U~_j over window positions: -beta_jt for t<j, 1 at t=j, 0 after
      VectorXd uj = VectorXd::Zero(w);
      const VectorXd bj = phi.beta(j);
      for (int t = h; t < j; ++t) uj(t - h) = -bj(t - 1);
      uj(j - h) = 1.0;

      VectorXd ujm(nm);
      double e_ij = phi.underline_alpha(j).dot(x);
      for (int t = 1; t < h; ++t) e_ij += bj(t - 1) * y_filled(i, t - 1);
      int mk = 0;
      for (int t = h; t <= r; ++t) {
        const double u = uj(t - h);
        if (ds.observed(i, t - 1)) {
          e_ij -= u * y_filled(i, t - 1);
        } else {
          ujm(mk++) = u;
        }
      }
      prec.selfadjointView<Eigen::Lower>().rankUpdate(ujm, phi.gamma(j - 1));
      rhs += phi.gamma(j - 1) * e_ij * ujm;
    }
    prec = prec.selfadjointView<Eigen::Lower>();
    Eigen::LLT<MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success)
      throw std::logic_error("mda_i_step: conditional precision not SPD");
    const VectorXd mu = llt.solve(rhs);
    VectorXd e(nm);
    for (int k = 0; k < nm; ++k) e(k) = draw_std_normal(rng);
    const VectorXd draw = mu + llt.matrixL().transpose().solve(e);
    for (int k = 0; k < nm; ++k) y_filled(i, miss[static_cast<std::size_t>(k)]) = draw(k);
  }
  (void)q;
}

std::vector<ParamDraw> run_mda(const TrialDataset& ds, const PriorSpec& prior,
                               const ChainConfig& cfg) {
  const PatternIndex pi = index_patterns(ds);
  const SeqPrior sp = seq_prior_params(prior);
  Rng rng(cfg.seed);
  MatrixXd y = initial_fill(ds, /*fill_post_dropout=*/false);

  std::vector<ParamDraw> out;
  out.reserve(cfg.n_draws);
  SequentialParams phi;
  auto iterate = [&] {
    phi = mda_p_step(ds, pi, y, sp, prior, rng);
    mda_i_step(ds, pi, phi, y, rng);
  };
  for (int it = 0; it < cfg.burn_in; ++it) iterate();
  for (int k = 0; k < cfg.n_draws; ++k) {
    for (int t = 0; t < cfg.thin; ++t) iterate();
    out.push_back({phi, y});
  }
  return out;
}

std::vector<ParamDraw> run_fda(const TrialDataset& ds, const PriorSpec& prior,
                               const ChainConfig& cfg) {
  const PatternIndex pi = index_patterns(ds);
  const SeqPrior sp = seq_prior_params(prior);
  Rng rng(cfg.seed);
  MatrixXd y = initial_fill(ds, /*fill_post_dropout=*/true);

  std::vector<ParamDraw> out;
  out.reserve(cfg.n_draws);
  SequentialParams phi;
  auto iterate = [&] {
    phi = p_step(ds, pi, y, sp, prior, /*full_data=*/true, rng);
    mda_i_step(ds, pi, phi, y, rng);
    for (int i = 0; i < ds.n_subjects; ++i)
      if (pi.dropout[i] < ds.p_visits)
        impute_post_dropout_seq(ds, i, pi.dropout[i], phi, y, rng);
  };
  for (int it = 0; it < cfg.burn_in; ++it) iterate();
  for (int k = 0; k < cfg.n_draws; ++k) {
    for (int t = 0; t < cfg.thin; ++t) iterate();
    MatrixXd ym = y;
    strip_post_dropout(pi, ym);
    out.push_back({phi, ym});
  }
  return out;
}

std::vector<ParamDraw> run_augmented(
    const TrialDataset& ds, const PriorSpec& prior, const ChainConfig& cfg,
    std::vector<std::pair<VectorXd, MatrixXd>>* w_draws) {
  const int n = ds.n_subjects, p = ds.p_visits, q = ds.q();
  const int k = q - 1 + p;  // dim of w_i = (x1..xd, g, y1..yp)
  const PatternIndex pi = index_patterns(ds);
  const AugmentedPrior ap = build_augmented(prior);
  Rng rng(cfg.seed);

  MatrixXd W(n, k);
  {
    MatrixXd y0 = initial_fill(ds, /*fill_post_dropout=*/true);
    for (int i = 0; i < n; ++i) {
      W.row(i).head(q - 2) = ds.covariates.row(i);
      W(i, q - 2) = static_cast<double>(ds.arm(i));
      W.row(i).tail(p) = y0.row(i);
    }
  }

  VectorXd alpha_w(k);
  MatrixXd sigma_w(k, k);
  const double m11 = ap.m11;

  auto p_step_w = [&] {
    const VectorXd wbar = W.colwise().mean();
    MatrixXd S = MatrixXd::Zero(k, k);
    for (int i = 0; i < n; ++i) {
      const VectorXd c = W.row(i).transpose() - wbar;
      S.selfadjointView<Eigen::Lower>().rankUpdate(c);
    }
    S = S.selfadjointView<Eigen::Lower>();
    MatrixXd scale = S + ap.A_w;
    double f;
    if (m11 > 0.0) {
      const VectorXd dd = wbar - ap.alpha_w0;
      scale += (n * m11 / (n + m11)) * dd * dd.transpose();
      f = n + ap.nu_w;
    } else {
      f = n + ap.nu_w - 1.0;  // corrected df for the flat alpha_w prior
    }
    sigma_w = draw_inverse_wishart(scale, f, rng);
    const VectorXd mean = (n * wbar + m11 * ap.alpha_w0) / (n + m11);
    const MatrixXd chol = MatrixXd((sigma_w / (n + m11)).llt().matrixL());
    alpha_w = draw_mvn(mean, chol, rng);
  };

  auto i_step_w = [&] {
    for (int i = 0; i < n; ++i) {
      std::vector<int> miss, obs;
      for (int c = 0; c < q - 1; ++c) obs.push_back(c);
      for (int j = 0; j < p; ++j)
        (ds.observed(i, j) ? obs : miss).push_back(q - 1 + j);
      if (miss.empty()) continue;
      const int nm = static_cast<int>(miss.size()), no = static_cast<int>(obs.size());
      MatrixXd Soo(no, no), Smo(nm, no), Smm(nm, nm);
      VectorXd mu_o(no), mu_m(nm), wo(no);
      for (int a = 0; a < no; ++a) {
        mu_o(a) = alpha_w(obs[a]);
        wo(a) = W(i, obs[a]);
        for (int b = 0; b < no; ++b) Soo(a, b) = sigma_w(obs[a], obs[b]);
      }
      for (int a = 0; a < nm; ++a) {
        mu_m(a) = alpha_w(miss[a]);
        for (int b = 0; b < no; ++b) Smo(a, b) = sigma_w(miss[a], obs[b]);
        for (int b = 0; b < nm; ++b) Smm(a, b) = sigma_w(miss[a], miss[b]);
      }
      Eigen::LLT<MatrixXd> llt(Soo);
      const MatrixXd K = llt.solve(Smo.transpose()).transpose();  // Smo Soo^{-1}
      const VectorXd mu = mu_m + K * (wo - mu_o);
      const MatrixXd cov = Smm - K * Smo.transpose();
      const MatrixXd chol = MatrixXd(cov.llt().matrixL());
      const VectorXd draw = draw_mvn(mu, chol, rng);
      for (int a = 0; a < nm; ++a) W(i, miss[a]) = draw(a);
    }
  };

  auto extract_phi = [&]() -> SequentialParams {
    LdlFactors f = ldl_decompose(sigma_w);
    const VectorXd ua = f.U * alpha_w;
    SequentialParams sp;
    sp.q = q;
    sp.gamma.resize(p);
    sp.theta.resize(p);
    const int d = q - 2;
    for (int j = 1; j <= p; ++j) {
      const int row = q - 2 + j;  // 0-based row of visit j in the w ordering
      sp.gamma(j - 1) = 1.0 / f.lambda(row);
      VectorXd beta_star = -f.U.row(row).head(row).transpose();  // coeffs on x~, y1..y_{j-1}
      VectorXd th(q + j - 1);
      th(0) = ua(row);                         // intercept
      th.segment(1, d) = beta_star.head(d);    // covariates
      th(q - 1) = beta_star(d);                // treatment
      th.tail(j - 1) = beta_star.tail(j - 1);  // lagged outcomes
      sp.theta[j - 1] = th;
    }
    return sp;
  };

  std::vector<ParamDraw> out;
  out.reserve(cfg.n_draws);
  auto iterate = [&] {
    p_step_w();
    i_step_w();
  };
  for (int it = 0; it < cfg.burn_in; ++it) iterate();
  for (int kk = 0; kk < cfg.n_draws; ++kk) {
    for (int t = 0; t < cfg.thin; ++t) iterate();
    MatrixXd ym = W.rightCols(p);
    strip_post_dropout(pi, ym);
    out.push_back({extract_phi(), ym});
    if (w_draws) w_draws->emplace_back(alpha_w, sigma_w);
  }
  return out;
}

std::vector<SequentialParams> run_sri(const TrialDataset& ds,
                                      const PriorSpec& prior,
                                      const ChainConfig& cfg) {
  const PatternIndex pi = index_patterns(ds);
  if (!pi.is_monotone())
    throw std::invalid_argument("run_sri: data must be monotone");
  if (prior.A.cwiseAbs().sum() != 0.0 || prior.M.cwiseAbs().sum() != 0.0)
    throw std::invalid_argument("run_sri: requires A = 0 and M = 0");
  const int p = ds.p_visits, q = ds.q();
  Rng rng(cfg.seed);

  // Per-visit least squares over subjects with r_i >= j.
  std::vector<Eigen::LLT<MatrixXd>> ztz_llt(p);
  std::vector<VectorXd> theta_hat(p);
  std::vector<double> S_hat(p), df(p);
  for (int j = 1; j <= p; ++j) {
    const int kdim = q + j - 1;
    MatrixXd ZtZ = MatrixXd::Zero(kdim, kdim);
    VectorXd Zty = VectorXd::Zero(kdim);
    double yty = 0.0;
    for (int i = 0; i < ds.n_subjects; ++i) {
      if (pi.dropout[i] < j) continue;
      const VectorXd z = z_vector(ds, ds.outcomes, i, j).head(kdim);
      const double yij = ds.outcomes(i, j - 1);
      ZtZ.selfadjointView<Eigen::Lower>().rankUpdate(z);
      Zty += z * yij;
      yty += yij * yij;
    }
    ZtZ = ZtZ.selfadjointView<Eigen::Lower>();
    ztz_llt[j - 1].compute(ZtZ);
    if (ztz_llt[j - 1].info() != Eigen::Success)
      throw std::runtime_error("run_sri: singular design at visit " + std::to_string(j));
    theta_hat[j - 1] = ztz_llt[j - 1].solve(Zty);
    S_hat[j - 1] = yty - Zty.dot(theta_hat[j - 1]);
    df[j - 1] = pi.n_j[j - 1] + prior.nu0 + j - q - p;
    if (!(df[j - 1] > 0.0))
      throw std::runtime_error("run_sri: nonpositive chi-square df at visit " +
                               std::to_string(j));
  }

  std::vector<SequentialParams> out;
  out.reserve(cfg.n_draws);
  for (int kk = 0; kk < cfg.n_draws; ++kk) {
    SequentialParams sp;
    sp.q = q;
    sp.gamma.resize(p);
    sp.theta.resize(p);
    for (int j = 1; j <= p; ++j) {
      const double g = draw_chisq(df[j - 1], rng) / S_hat[j - 1];
      sp.gamma(j - 1) = g;
      VectorXd e(q + j - 1);
      for (Eigen::Index t = 0; t < e.size(); ++t) e(t) = draw_std_normal(rng);
      sp.theta[j - 1] =
          theta_hat[j - 1] +
          ztz_llt[j - 1].matrixL().transpose().solve(e) / std::sqrt(g);
    }
    out.push_back(std::move(sp));
  }
  return out;
}

std::vector<DiagnosticRow> diagnostics(const MatrixXd& draws,
                                       const std::vector<std::string>& names) {
  const Eigen::Index n = draws.rows();
  if (n < 10) throw std::invalid_argument("diagnostics: need at least 10 draws");
  std::vector<DiagnosticRow> rows;
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    DiagnosticRow row;
    row.name = c < static_cast<Eigen::Index>(names.size())
                   ? names[static_cast<std::size_t>(c)]
                   : "param" + std::to_string(c + 1);
    const VectorXd v = draws.col(c);
    const double mean = v.mean();
    row.mean = mean;
    const VectorXd d = v.array() - mean;
    const double var = d.squaredNorm() / static_cast<double>(n - 1);
    if (var <= 0.0) {
      row.lag1 = std::numeric_limits<double>::quiet_NaN();
      row.mc_se = 0.0;
    } else {
      double acov1 = 0.0;
      for (Eigen::Index t = 0; t + 1 < n; ++t) acov1 += d(t) * d(t + 1);
      acov1 /= static_cast<double>(n - 1);
      const double rho = acov1 / var;
      row.lag1 = rho;
      double inflate = (rho > -1.0 && rho < 1.0) ? (1.0 + rho) / (1.0 - rho) : 1.0;
      if (inflate < 1.0) inflate = 1.0;
      row.mc_se = std::sqrt(var * inflate / static_cast<double>(n));
    }
    rows.push_back(row);
  }
  return rows;
}

MatrixXd flatten_draws(const std::vector<ParamDraw>& draws,
                       std::vector<std::string>& names) {
  if (draws.empty()) return MatrixXd();
  const auto& first = draws.front().params;
  const int p = first.p();
  names.clear();
  int ncol = 0;
  for (int j = 1; j <= p; ++j) {
    for (Eigen::Index t = 0; t < first.theta[j - 1].size(); ++t)
      names.push_back("theta" + std::to_string(j) + "_" + std::to_string(t + 1));
    names.push_back("gamma" + std::to_string(j));
    ncol += static_cast<int>(first.theta[j - 1].size()) + 1;
  }
  MatrixXd out(static_cast<Eigen::Index>(draws.size()), ncol);
  for (std::size_t r = 0; r < draws.size(); ++r) {
    int c = 0;
    for (int j = 1; j <= p; ++j) {
      const VectorXd& th = draws[r].params.theta[j - 1];
      for (Eigen::Index t = 0; t < th.size(); ++t) out(static_cast<Eigen::Index>(r), c++) = th(t);
      out(static_cast<Eigen::Index>(r), c++) = draws[r].params.gamma(j - 1);
    }
  }
  return out;
}

}  // namespace pmm
