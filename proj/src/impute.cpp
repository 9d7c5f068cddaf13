#include "pmm/impute.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pmm {

namespace {

// delta_j and underline_delta_j stacked for visits s+1..p
VectorXd delta_tail(const SequentialParams& phi, int s) {
  const MatrixXd U = phi.U();
  const int p = phi.p();
  VectorXd ud(p);
  for (int j = 1; j <= p; ++j) ud(j - 1) = phi.underline_delta(j);
  // delta = U^{-1} underline_delta
  const VectorXd delta = U.triangularView<Eigen::UnitLower>().solve(ud);
  return delta.tail(p - s);
}

VectorXd underline_delta_tail(const SequentialParams& phi, int s) {
  const int p = phi.p();
  VectorXd ud(p - s);
  for (int j = s + 1; j <= p; ++j) ud(j - s - 1) = phi.underline_delta(j);
  return ud;
}

double delta_at(const SequentialParams& phi, int s) {
  if (s == 0) return 0.0;  // no treatment difference in mean baseline response
  const MatrixXd U = phi.U();
  VectorXd ud(phi.p());
  for (int j = 1; j <= phi.p(); ++j) ud(j - 1) = phi.underline_delta(j);
  const VectorXd delta = U.triangularView<Eigen::UnitLower>().solve(ud);
  return delta(s - 1);
}

}  // namespace

std::string PmmMethod::label() const {
  std::ostringstream os;
  switch (tag) {
    case MethodTag::MAR: return "MAR";
    case MethodTag::J2R: return "J2R";
    case MethodTag::CIR: return "CIR";
    case MethodTag::CR: return "CR";
    case MethodTag::ECR: os << "ECR(" << phi << ")"; return os.str();
    case MethodTag::MCR: return "MCR";
    case MethodTag::CDELTA:
      os << "cDelta(" << (variant == DeltaVariant::FirstVisit ? "first" : "all") << ",";
      for (Eigen::Index j = 0; j < delta_c.size(); ++j) os << (j ? ";" : "") << delta_c(j);
      os << ")";
      return os.str();
    case MethodTag::UDELTA:
      os << "uDelta(";
      for (Eigen::Index j = 0; j < delta_u.size(); ++j) os << (j ? ";" : "") << delta_u(j);
      os << ")";
      return os.str();
  }
  return "?";
}

PmmMethod PmmMethod::ecr(double phi) {
  if (phi < 0.0 || phi > 1.0) throw std::invalid_argument("ECR: phi must lie in [0,1]");
  PmmMethod m{MethodTag::ECR};
  m.phi = phi;
  return m;
}

PmmMethod PmmMethod::mcr(VectorXi flags) {
  PmmMethod m{MethodTag::MCR};
  m.mcr_flags = std::move(flags);
  return m;
}

PmmMethod PmmMethod::cdelta(VectorXd delta, DeltaVariant v) {
  if (!delta.allFinite()) throw std::invalid_argument("cDelta: delta must be finite");
  PmmMethod m{MethodTag::CDELTA};
  m.delta_c = std::move(delta);
  m.variant = v;
  return m;
}

PmmMethod PmmMethod::udelta(VectorXd delta) {
  if (!delta.allFinite()) throw std::invalid_argument("uDelta: delta must be finite");
  PmmMethod m{MethodTag::UDELTA};
  m.delta_u = std::move(delta);
  return m;
}

VectorXd impute_mar(const VectorXd& x, int g, const VectorXd& y_head, int s,
                    const SequentialParams& phi, const PatternBlocks& blocks,
                    const VectorXd& e) {
  const int p = phi.p();
  const int q = phi.q;
  // underline_mu_ij = sum_k underline_alpha_jk x_ik over the non-treatment
  // part of x; the treatment term enters via underline_delta.
  VectorXd inner(p - s);
  for (int j = s + 1; j <= p; ++j) {
    const VectorXd ua = phi.underline_alpha(j);
    double mu = 0.0;
    for (int k = 0; k < q - 1; ++k) mu += ua(k) * x(k);
    inner(j - s - 1) = mu + ua(q - 1) * g;
  }
  if (s > 0) inner -= blocks.U21 * y_head.head(s);
  inner += blocks.lambda2.cwiseSqrt().cwiseProduct(e);
  return blocks.L22 * inner;
}

VectorXd pmm_shift(const PmmMethod& method, int s, int g,
                   const SequentialParams& phi, const PatternBlocks& blocks) {
  const int p = phi.p();
  const int m = p - s;
  if (g == 0 || method.tag == MethodTag::MAR) return VectorXd::Zero(m);

  switch (method.tag) {
    case MethodTag::J2R:
      return delta_tail(phi, s);
    case MethodTag::CIR:
      return delta_tail(phi, s) - delta_at(phi, s) * VectorXd::Ones(m);
    case MethodTag::CR:
      return blocks.L22 * underline_delta_tail(phi, s);
    case MethodTag::ECR:
      return method.phi * (blocks.L22 * underline_delta_tail(phi, s));
    case MethodTag::MCR: {
      if (method.mcr_flags.size() != p)
        throw std::invalid_argument("MCR: flags not set (expected p entries)");
      VectorXd dmcr = underline_delta_tail(phi, s);
      for (int j = s + 1; j <= p; ++j)
        dmcr(j - s - 1) *= 1.0 - method.mcr_flags(j - 1);
      return blocks.L22 * dmcr;
    }
    case MethodTag::CDELTA: {
      if (method.delta_c.size() != p)
        throw std::invalid_argument("cDelta: delta vector must have p entries");
      VectorXd dc = VectorXd::Zero(m);
      if (method.variant == DeltaVariant::FirstVisit) {
        dc(0) = method.delta_c(s);  // visit s+1 only
      } else {
        for (int j = s + 1; j <= p; ++j) dc(j - s - 1) = method.delta_c(j - 1);
      }
      return blocks.L22 * dc;
    }
    case MethodTag::UDELTA: {
      if (method.delta_u.size() != p)
        throw std::invalid_argument("uDelta: delta vector must have p entries");
      VectorXd du(m);
      for (int j = s + 1; j <= p; ++j) du(j - s - 1) = method.delta_u(j - 1);
      return du;
    }
    default:
      break;
  }
  return VectorXd::Zero(m);
}

VectorXi mcr_flags(const MarginalParams& mle) {
  const SequentialParams sp = from_marginal(mle);
  const int p = sp.p();
  const double delta_p = mle.delta()(p - 1);
  VectorXi d(p);
  for (int j = 1; j <= p; ++j)
    d(j - 1) = sp.underline_delta(j) * delta_p >= 0.0 ? 0 : 1;
  return d;
}

std::vector<ImputationReplicate> build_replicates(
    const TrialDataset& ds, const PatternIndex& pi,
    const std::vector<ParamDraw>& draws, const std::vector<PmmMethod>& methods,
    Rng& rng) {
  const int n = ds.n_subjects, p = ds.p_visits;
  std::vector<ImputationReplicate> out;
  out.reserve(draws.size() * methods.size());

  for (std::size_t k = 0; k < draws.size(); ++k) {
    const SequentialParams& phi = draws[k].params;
    const MatrixXd U = phi.U();
    LdlFactors f;
    f.U = U;
    f.L = U.triangularView<Eigen::UnitLower>().solve(MatrixXd::Identity(p, p));
    f.lambda = phi.gamma.cwiseInverse();
    std::vector<PatternBlocks> blocks(p);
    for (int s = 0; s < p; ++s) blocks[s] = pattern_blocks(f, s);

    // MAR imputation once per subject, shared noise across methods
    MatrixXd y_mar = draws[k].y_monotone;
    std::vector<VectorXd> mar_tail(n);
    for (int i = 0; i < n; ++i) {
      const int s = pi.dropout[i];
      if (s == p) continue;
      VectorXd e(p - s);
      for (int t = 0; t < p - s; ++t) e(t) = draw_std_normal(rng);
      mar_tail[i] = impute_mar(ds.design_row(i), ds.arm(i),
                               y_mar.row(i).transpose(), s, phi, blocks[s], e);
      y_mar.row(i).tail(p - s) = mar_tail[i].transpose();
    }

    for (const PmmMethod& method : methods) {
      ImputationReplicate rep;
      rep.outcomes = y_mar;
      rep.method = method.label();
      rep.replicate = static_cast<int>(k);
      rep.source_draw = static_cast<int>(k);
      if (method.tag != MethodTag::MAR) {
        for (int i = 0; i < n; ++i) {
          const int s = pi.dropout[i];
          if (s == p || ds.arm(i) == 0) continue;
          rep.outcomes.row(i).tail(p - s) -=
              pmm_shift(method, s, ds.arm(i), phi, blocks[s]).transpose();
        }
      }
      out.push_back(std::move(rep));
    }
  }
  return out;
}

}  // namespace pmm
