#include "pmm/analyze.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "pmm/linalg.hpp"

namespace pmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double observed_loglik(const TrialDataset& ds, const MatrixXd& alpha,
                       const MatrixXd& sigma) {
  double ll = 0.0;
  for (int i = 0; i < ds.n_subjects; ++i) {
    std::vector<int> obs;
    for (int j = 0; j < ds.p_visits; ++j)
      if (ds.observed(i, j)) obs.push_back(j);
    if (obs.empty()) continue;
    const int no = static_cast<int>(obs.size());
    const VectorXd mu_full = alpha * ds.design_row(i);
    VectorXd resid(no);
    MatrixXd Soo(no, no);
    for (int a = 0; a < no; ++a) {
      resid(a) = ds.outcomes(i, obs[a]) - mu_full(obs[a]);
      for (int b = 0; b < no; ++b) Soo(a, b) = sigma(obs[a], obs[b]);
    }
    Eigen::LLT<MatrixXd> llt(Soo);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("fit_mle_em: singular within-iteration covariance");
    double logdet = 0.0;
    for (int a = 0; a < no; ++a) logdet += 2.0 * std::log(llt.matrixL()(a, a));
    ll += -0.5 * (no * kLog2Pi + logdet + resid.dot(llt.solve(resid)));
  }
  return ll;
}

}  // namespace

MleFit fit_mle_em(const TrialDataset& ds, double tol, int max_iter) {
  const int n = ds.n_subjects, p = ds.p_visits, q = ds.q();

  // start: per-visit OLS on observed rows, covariance from pairwise-complete
  // residuals shrunk toward the diagonal
  MatrixXd alpha = MatrixXd::Zero(p, q);
  for (int j = 0; j < p; ++j) {
    MatrixXd XtX = MatrixXd::Zero(q, q);
    VectorXd Xty = VectorXd::Zero(q);
    int c = 0;
    for (int i = 0; i < n; ++i) {
      if (!ds.observed(i, j)) continue;
      const VectorXd x = ds.design_row(i);
      XtX.selfadjointView<Eigen::Lower>().rankUpdate(x);
      Xty += x * ds.outcomes(i, j);
      ++c;
    }
    if (c <= q)
      throw std::runtime_error("fit_mle_em: visit " + std::to_string(j + 1) +
                               " has too few observed rows");
    XtX = XtX.selfadjointView<Eigen::Lower>();
    alpha.row(j) = XtX.llt().solve(Xty).transpose();
  }
  MatrixXd sigma = MatrixXd::Identity(p, p);
  {
    VectorXd sj = VectorXd::Zero(p);
    for (int j = 0; j < p; ++j) {
      double ss = 0.0;
      int c = 0;
      for (int i = 0; i < n; ++i) {
        if (!ds.observed(i, j)) continue;
        const double r = ds.outcomes(i, j) - alpha.row(j).dot(ds.design_row(i));
        ss += r * r;
        ++c;
      }
      sj(j) = c > 1 ? ss / c : 1.0;
    }
    sigma = sj.asDiagonal();
  }

  MatrixXd XtX = MatrixXd::Zero(q, q);
  for (int i = 0; i < n; ++i)
    XtX.selfadjointView<Eigen::Lower>().rankUpdate(ds.design_row(i));
  XtX = XtX.selfadjointView<Eigen::Lower>();
  Eigen::LLT<MatrixXd> xtc(XtX);

  double ll = observed_loglik(ds, alpha, sigma);
  int it = 0;
  for (; it < max_iter; ++it) {
    // E-step
    MatrixXd yhat(n, p);
    MatrixXd csum = MatrixXd::Zero(p, p);
    for (int i = 0; i < n; ++i) {
      const VectorXd mu = alpha * ds.design_row(i);
      std::vector<int> obs, mis;
      for (int j = 0; j < p; ++j)
        (ds.observed(i, j) ? obs : mis).push_back(j);
      for (int j : obs) yhat(i, j) = ds.outcomes(i, j);
      if (mis.empty()) continue;
      if (obs.empty()) {
        for (int j : mis) yhat(i, j) = mu(j);
        for (int a : mis)
          for (int b : mis) csum(a, b) += sigma(a, b);
        continue;
      }
      const int no = static_cast<int>(obs.size()), nm = static_cast<int>(mis.size());
      MatrixXd Soo(no, no), Smo(nm, no), Smm(nm, nm);
      VectorXd ro(no);
      for (int a = 0; a < no; ++a) {
        ro(a) = ds.outcomes(i, obs[a]) - mu(obs[a]);
        for (int b = 0; b < no; ++b) Soo(a, b) = sigma(obs[a], obs[b]);
      }
      for (int a = 0; a < nm; ++a) {
        for (int b = 0; b < no; ++b) Smo(a, b) = sigma(mis[a], obs[b]);
        for (int b = 0; b < nm; ++b) Smm(a, b) = sigma(mis[a], mis[b]);
      }
      Eigen::LLT<MatrixXd> llt(Soo);
      const MatrixXd K = llt.solve(Smo.transpose()).transpose();
      const VectorXd cm = K * ro;
      const MatrixXd cc = Smm - K * Smo.transpose();
      for (int a = 0; a < nm; ++a) yhat(i, mis[a]) = mu(mis[a]) + cm(a);
      for (int a = 0; a < nm; ++a)
        for (int b = 0; b < nm; ++b) csum(mis[a], mis[b]) += cc(a, b);
    }
    // M-step
    MatrixXd Xty = MatrixXd::Zero(q, p);
    for (int i = 0; i < n; ++i)
      Xty += ds.design_row(i) * yhat.row(i);
    alpha = xtc.solve(Xty).transpose();
    MatrixXd R = MatrixXd::Zero(p, p);
    for (int i = 0; i < n; ++i) {
      const VectorXd r = yhat.row(i).transpose() - alpha * ds.design_row(i);
      R.selfadjointView<Eigen::Lower>().rankUpdate(r);
    }
    R = R.selfadjointView<Eigen::Lower>();
    sigma = (R + csum) / static_cast<double>(n);

    const double ll_new = observed_loglik(ds, alpha, sigma);
    const double rel = std::abs(ll_new - ll) / (std::abs(ll) + 1.0);
    ll = ll_new;
    if (rel < tol) { ++it; break; }
  }
  if (it >= max_iter)
    throw std::runtime_error("fit_mle_em: no convergence in " +
                             std::to_string(max_iter) + " iterations");
  MleFit fit;
  fit.params = {alpha, sigma};
  fit.log_lik = ll;
  fit.iterations = it;
  return fit;
}

std::vector<VisitEstimate> analyze_replicate(const ImputationReplicate& rep,
                                             const TrialDataset& ds) {
  const int n = ds.n_subjects, p = ds.p_visits, q = ds.q();
  MatrixXd X(n, q);
  for (int i = 0; i < n; ++i) X.row(i) = ds.design_row(i).transpose();
  const MatrixXd XtX = X.transpose() * X;
  Eigen::LLT<MatrixXd> llt(XtX);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("analyze_replicate: singular design");
  const MatrixXd XtX_inv = llt.solve(MatrixXd::Identity(q, q));

  std::vector<VisitEstimate> out(p);
  for (int j = 0; j < p; ++j) {
    const VectorXd y = rep.outcomes.col(j);
    const VectorXd coef = llt.solve(X.transpose() * y);
    const double rss = (y - X * coef).squaredNorm();
    const double s2 = rss / static_cast<double>(n - q);
    out[j].visit = j + 1;
    out[j].estimate = coef(q - 1);
    out[j].variance = s2 * XtX_inv(q - 1, q - 1);
  }
  return out;
}

PooledResult rubin_pool(const std::vector<VisitEstimate>& estimates,
                        double confidence) {
  const int m = static_cast<int>(estimates.size());
  if (m < 2) throw std::invalid_argument("rubin_pool: need m >= 2 replicates");
  PooledResult r;
  r.visit = estimates.front().visit;
  r.m = m;
  double qs = 0.0, ws = 0.0;
  for (const auto& e : estimates) { qs += e.estimate; ws += e.variance; }
  r.q_bar = qs / m;
  r.W = ws / m;
  double bs = 0.0;
  for (const auto& e : estimates) bs += (e.estimate - r.q_bar) * (e.estimate - r.q_bar);
  r.B = bs / (m - 1);
  r.T = r.W + (1.0 + 1.0 / m) * r.B;
  r.se = std::sqrt(r.T);
  const double alpha = 1.0 - confidence;
  double tq;
  if (r.B > 0.0) {
    const double a = 1.0 + r.W / ((1.0 + 1.0 / m) * r.B);
    r.df = (m - 1) * a * a;
    boost::math::students_t_distribution<double> t(r.df);
    tq = boost::math::quantile(t, 1.0 - alpha / 2.0);
  } else {
    r.df = std::numeric_limits<double>::infinity();
    boost::math::normal_distribution<double> z(0.0, 1.0);
    tq = boost::math::quantile(z, 1.0 - alpha / 2.0);
  }
  r.ci_low = r.q_bar - tq * r.se;
  r.ci_high = r.q_bar + tq * r.se;
  return r;
}

PipelineResult run_pipeline(const TrialDataset& ds, const PriorSpec& prior,
                            const ChainConfig& cfg,
                            std::vector<PmmMethod> methods,
                            double confidence, int threads,
                            std::vector<ParamDraw>* keep_draws,
                            std::vector<ImputationReplicate>* keep_reps) {
  PipelineResult result;
  result.mle = fit_mle_em(ds);
  for (auto& method : methods)
    if (method.tag == MethodTag::MCR && method.mcr_flags.size() == 0)
      method.mcr_flags = mcr_flags(result.mle.params);

  const PatternIndex pi = index_patterns(ds);
  std::vector<ParamDraw> draws;
  switch (cfg.algorithm) {
    case Algorithm::MDA: draws = run_mda(ds, prior, cfg); break;
    case Algorithm::FDA: draws = run_fda(ds, prior, cfg); break;
    case Algorithm::AUGMENTED: draws = run_augmented(ds, prior, cfg); break;
    case Algorithm::SRI: {
      auto params = run_sri(ds, prior, cfg);
      draws.reserve(params.size());
      for (auto& sp : params) draws.push_back({std::move(sp), ds.outcomes});
      break;
    }
  }

  Rng rng(derive_seed(cfg.seed, 0x1757u));
  const auto reps = build_replicates(ds, pi, draws, methods, rng);
  if (keep_draws) *keep_draws = draws;
  if (keep_reps) *keep_reps = reps;

  // replicate analyses are independent; split across threads by index
  std::vector<std::vector<VisitEstimate>> per_rep(reps.size());
  const int nthreads = std::max(1, threads);
  auto worker = [&](std::size_t t0) {
    for (std::size_t r = t0; r < reps.size(); r += static_cast<std::size_t>(nthreads))
      per_rep[r] = analyze_replicate(reps[r], ds);
  };
  if (nthreads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker, static_cast<std::size_t>(t));
    for (auto& th : pool) th.join();
  }

  const int p = ds.p_visits;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    MethodResults mr;
    mr.method = methods[mi].label();
    for (int j = 0; j < p; ++j) {
      std::vector<VisitEstimate> ests;
      ests.reserve(draws.size());
      for (std::size_t k = 0; k < draws.size(); ++k)
        ests.push_back(per_rep[k * methods.size() + mi][static_cast<std::size_t>(j)]);
      mr.visits.push_back(rubin_pool(ests, confidence));
    }
    result.methods.push_back(std::move(mr));
  }
  return result;
}

void write_results_csv(const PipelineResult& res, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_results_csv: cannot open '" + path + "'");
  out.precision(12);
  out << "method,visit,estimate,se,df,ci_low,ci_high,W,B,m\n";
  for (const auto& mr : res.methods)
    for (const auto& v : mr.visits)
      out << mr.method << "," << v.visit << "," << v.q_bar << "," << v.se << ","
          << v.df << "," << v.ci_low << "," << v.ci_high << "," << v.W << ","
          << v.B << "," << v.m << "\n";
}

}  // namespace pmm
