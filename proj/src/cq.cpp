#include "ocpec/cq.hpp"

#include <algorithm>
#include <cmath>

namespace ocpec {

using detail::VarSign;

namespace {

struct Layout {
  int og, oh, oG, oH, oz, cols;
};

Layout layout(const NodeGradients& ng) {
  const int l1 = static_cast<int>(ng.g_u.rows()), l2 = static_cast<int>(ng.h_u.rows());
  const int l = static_cast<int>(ng.G_u.rows());
  const int mz = static_cast<int>(ng.u_face.size());
  return {0, l1, l1 + l2, l1 + l2 + l, l1 + l2 + 2 * l, l1 + l2 + 2 * l + mz};
}

std::vector<int> decode(long b, int k, int base) {
  std::vector<int> code(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    code[static_cast<std::size_t>(i)] = static_cast<int>(b % base);
    b /= base;
  }
  return code;
}

long power(int base, int k) {
  long r = 1;
  for (int i = 0; i < k; ++i) r *= base;
  return r;
}

double spectral_norm(const Mat& M) {
  if (M.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(M);
  return svd.singularValues()(0);
}

}  // namespace

const char* to_string(QuasiNormality q) {
  return q == QuasiNormality::HoldsViaNoMultiplier ? "holds_via_no_multiplier" : "inconclusive";
}

NodeGradients node_gradients(const OcpecProblem& p, const DiscreteTrajectory& traj, int node,
                             double tol_act) {
  const double t = traj.t(node);
  const Vec x = traj.x.col(node), u = traj.u.col(node);
  const VectorEval g = p.g(t, x, u), h = p.h(t, x, u), G = p.G(t, x, u), H = p.H(t, x, u);
  NodeGradients ng;
  ng.g_u = g.jac_u;
  ng.h_u = h.jac_u;
  ng.G_u = G.jac_u;
  ng.H_u = H.jac_u;
  ng.g_x = g.jac_x;
  ng.h_x = h.jac_x;
  ng.G_x = G.jac_x;
  ng.H_x = H.jac_x;
  const NodeContext ctx = node_context(p, traj, node, tol_act);
  if (!ctx.ok) throw Error(ErrorCode::Infeasible, "node " + std::to_string(node) + ": " + ctx.error);
  ng.sets = ctx.sets;
  ng.u_face = ctx.u_face;
  return ng;
}

Mat licq_family(const NodeGradients& ng) {
  std::vector<Vec> rows;
  for (int i : ng.sets.i_zero) rows.push_back(ng.g_u.row(i).transpose());
  for (Eigen::Index i = 0; i < ng.h_u.rows(); ++i) rows.push_back(ng.h_u.row(i).transpose());
  for (int i : ng.sets.i_0plus) rows.push_back(ng.G_u.row(i).transpose());
  for (int i : ng.sets.i_00) rows.push_back(ng.G_u.row(i).transpose());
  for (int i : ng.sets.i_plus0) rows.push_back(ng.H_u.row(i).transpose());
  for (int i : ng.sets.i_00) rows.push_back(ng.H_u.row(i).transpose());
  for (std::size_t j = 0; j < ng.u_face.size(); ++j) {
    if (ng.u_face[j] != 0) rows.push_back(Vec::Unit(ng.m(), static_cast<Eigen::Index>(j)));
  }
  Mat F(static_cast<Eigen::Index>(rows.size()), ng.m());
  for (std::size_t r = 0; r < rows.size(); ++r) F.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  return F;
}

LicqResult mpec_licq(const NodeGradients& ng, double tol_sv) {
  const Mat F = licq_family(ng);
  LicqResult r;
  r.rows = static_cast<int>(F.rows());
  if (F.rows() == 0) {
    r.holds = true;
    r.min_singular_value = kInf;
  } else if (F.rows() > F.cols()) {
    r.holds = false;
    r.min_singular_value = 0.0;
  } else {
    r.min_singular_value = detail::min_singular_value(F);
    r.holds = r.min_singular_value > tol_sv;
  }
  return r;
}

Mat abnormal_matrix(const NodeGradients& ng) {
  const Layout L = layout(ng);
  Mat A = Mat::Zero(ng.m(), L.cols);
  A.middleCols(L.og, ng.g_u.rows()) = ng.g_u.transpose();
  A.middleCols(L.oh, ng.h_u.rows()) = ng.h_u.transpose();
  A.middleCols(L.oG, ng.G_u.rows()) = -ng.G_u.transpose();
  A.middleCols(L.oH, ng.H_u.rows()) = -ng.H_u.transpose();
  if (L.cols > L.oz) A.middleCols(L.oz, L.cols - L.oz).setIdentity();
  return A;
}

std::vector<VarSign> abnormal_signs(const NodeGradients& ng, const std::vector<int>& code) {
  const Layout L = layout(ng);
  std::vector<VarSign> s(static_cast<std::size_t>(L.cols), VarSign::Free);
  auto at = [&s](int c) -> VarSign& { return s[static_cast<std::size_t>(c)]; };
  for (int i : ng.sets.i_minus) at(L.og + i) = VarSign::Zero;
  for (int i : ng.sets.i_zero) at(L.og + i) = VarSign::NonNegative;
  for (int i : ng.sets.i_plus0) at(L.oG + i) = VarSign::Zero;
  for (int i : ng.sets.i_0plus) at(L.oH + i) = VarSign::Zero;
  for (std::size_t k = 0; k < ng.sets.i_00.size() && k < code.size(); ++k) {
    const int i = ng.sets.i_00[k];
    switch (code[k]) {
      case 0: at(L.oG + i) = VarSign::Zero; break;
      case 1: at(L.oH + i) = VarSign::Zero; break;
      default: at(L.oG + i) = at(L.oH + i) = VarSign::NonNegative; break;
    }
  }
  for (std::size_t j = 0; j < ng.u_face.size(); ++j) {
    const int f = ng.u_face[j];
    at(L.oz + static_cast<int>(j)) = f == -1  ? VarSign::NonPositive
                                      : f == 1 ? VarSign::NonNegative
                                      : f == 2 ? VarSign::Free
                                               : VarSign::Zero;
  }
  return s;
}

AbnormalResult no_abnormal_multiplier(const NodeGradients& ng) {
  AbnormalResult out;
  const Mat A = abnormal_matrix(ng);
  const int k = static_cast<int>(ng.sets.i_00.size());
  const long total = power(3, k);
  for (long b = 0; b < total; ++b) {
    const std::vector<int> code = decode(b, k, 3);
    ++out.branches_examined;
    const auto ray = detail::find_cone_ray(A, abnormal_signs(ng, code));
    if (!ray) continue;
    const Layout L = layout(ng);
    const Vec& v = *ray;
    NodeMultipliers w;
    w.lam_g = v.segment(L.og, L.oh - L.og);
    w.lam_h = v.segment(L.oh, L.oG - L.oh);
    w.lam_G = v.segment(L.oG, L.oH - L.oG);
    w.lam_H = v.segment(L.oH, L.oz - L.oH);
    w.zeta = v.segment(L.oz, L.cols - L.oz);
    w.residual = (A * v).norm();
    const Vec gx = ng.g_x.transpose() * w.lam_g + ng.h_x.transpose() * w.lam_h -
                   ng.G_x.transpose() * w.lam_G - ng.H_x.transpose() * w.lam_H;
    out.witness_grad_x_norm = gx.size() ? gx.cwiseAbs().maxCoeff() : 0.0;
    out.witness_violates_wbcq = out.witness_grad_x_norm > 1e-9;
    out.witness = std::move(w);
    out.witness_branch = code;
    out.verdict = QuasiNormality::Inconclusive;
    break;
  }
  return out;
}

KappaResult kappa_estimate(const NodeGradients& ng, const AbnormalResult& qn) {
  KappaResult out;
  const Mat A = abnormal_matrix(ng);
  const Layout L = layout(ng);
  // zeta ranges over a subspace; eliminate it by dropping the bound rows.
  std::vector<Eigen::Index> keep_rows;
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    const bool on_face = static_cast<std::size_t>(j) < ng.u_face.size() && ng.u_face[static_cast<std::size_t>(j)] != 0;
    if (!on_face) keep_rows.push_back(j);
  }
  const int k = static_cast<int>(ng.sets.i_00.size());
  const long total = power(2, k);
  double kappa = 0.0;
  for (long b = 0; b < total; ++b) {
    const std::vector<VarSign> s = abnormal_signs(ng, decode(b, k, 2));
    ++out.patterns;
    std::vector<Eigen::Index> cols;
    for (int c = 0; c < L.oz; ++c) {
      if (s[static_cast<std::size_t>(c)] != VarSign::Zero) cols.push_back(c);
    }
    if (cols.empty()) continue;
    if (cols.size() > keep_rows.size()) {
      kappa = kInf;
      continue;
    }
    Mat M(static_cast<Eigen::Index>(keep_rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < keep_rows.size(); ++r) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = A(keep_rows[r], cols[c]);
      }
    }
    const double sv = detail::min_singular_value(M);
    kappa = std::max(kappa, sv > 1e-12 * (1.0 + M.norm()) ? 1.0 / sv : kInf);
  }
  out.face_exact = k > 0;
  out.kappa = qn.verdict == QuasiNormality::Inconclusive ? kInf : kappa;
  return out;
}

bool linear_condition(const OcpecProblem& p) { return p.affine; }

SlopeResult bounded_slope(const OcpecProblem& p, const DiscreteTrajectory& traj, int node,
                          double kappa, const CqOptions& opts, std::mt19937_64& rng) {
  SlopeResult r;
  const double t = traj.t(node);
  const Vec x = traj.x.col(node), u = traj.u.col(node);
  auto norms = [&](const Vec& xs, const Vec& us, SlopeResult& acc) {
    acc.k_g = std::max(acc.k_g, spectral_norm(p.g(t, xs, us).jac_x));
    acc.k_h = std::max(acc.k_h, spectral_norm(p.h(t, xs, us).jac_x));
    acc.k_G = std::max(acc.k_G, spectral_norm(p.G(t, xs, us).jac_x));
    acc.k_H = std::max(acc.k_H, spectral_norm(p.H(t, xs, us).jac_x));
  };
  if (p.affine) {
    r.method = "operator_norm";
    norms(x, u, r);
  } else {
    r.method = "sampling";
    r.tube = opts.tube;
    r.samples = opts.tube_samples;
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const int dim = p.n + p.m;
    norms(x, u, r);
    for (int s = 0; s < opts.tube_samples; ++s) {
      Vec d(dim);
      for (int j = 0; j < dim; ++j) d(j) = nd(rng);
      const double nrm = d.norm();
      if (nrm == 0.0) continue;
      d *= opts.tube * std::pow(ud(rng), 1.0 / dim) / nrm;
      norms(x + d.head(p.n), u + d.tail(p.m), r);
    }
  }
  const double sum = r.k_g + r.k_h + r.k_G + r.k_H;
  r.k_S = std::isinf(kappa) ? kInf : kappa * sum;
  return r;
}

CqVerdict audit_node(const OcpecProblem& p, const DiscreteTrajectory& traj, int node,
                     const CqOptions& opts, std::mt19937_64& rng) {
  CqVerdict v;
  v.node = node;
  v.linear_condition = linear_condition(p);
  v.error_bound_certified = v.linear_condition;
  NodeGradients ng;
  try {
    ng = node_gradients(p, traj, node, opts.tol_act);
  } catch (const Error& e) {
    v.ok = false;
    v.error = e.what();
    v.kappa.kappa = kInf;
    v.slope.k_S = kInf;
    return v;
  }
  v.licq = mpec_licq(ng, opts.tol_sv);
  v.quasi_normality = no_abnormal_multiplier(ng);
  v.kappa = kappa_estimate(ng, v.quasi_normality);
  v.slope = bounded_slope(p, traj, node, v.kappa.kappa, opts, rng);
  return v;
}

std::vector<CqVerdict> audit(const OcpecProblem& p, const DiscreteTrajectory& traj,
                             const CqOptions& opts, std::mt19937_64& rng) {
  std::vector<CqVerdict> out;
  for (int k = 0; k <= traj.intervals(); ++k) out.push_back(audit_node(p, traj, k, opts, rng));
  return out;
}

}  // namespace ocpec
