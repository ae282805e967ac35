#include "ocpec/stationarity.hpp"

#include "ocpec/detail/linalg.hpp"
#include "ocpec/transcribe.hpp"

#include <algorithm>
#include <cmath>

namespace ocpec {

using detail::VarSign;

namespace {

// Column layout of the u-row: [lam_g | lam_h | lam_G | lam_H | zeta].
struct URow {
  Mat A;   // m x cols: grad_u Psi columns plus identity for zeta
  Mat Ax;  // n x cols: grad_x Psi columns (zero for zeta)
  Vec b;   // grad_u phi' p - lambda0 grad_u F
  Mat phi_x, phi_u;
  Vec F_x;
  std::vector<VarSign> signs;
  int og = 0, oh = 0, oG = 0, oH = 0, oz = 0, cols = 0;
};

int zeta_count(const OcpecProblem& p) { return p.control_set.bounded ? p.m : 0; }

URow build_urow(const OcpecProblem& p, const DiscreteTrajectory& traj, int k, const Vec& pk,
                int lambda0, const NodeContext& ctx) {
  const detail::NodeEval e = detail::eval_node(p, traj.t(k), traj.x.col(k), traj.u.col(k));
  URow r;
  const int l1 = p.l1, l2 = p.l2, l = p.l, mz = zeta_count(p);
  r.og = 0;
  r.oh = l1;
  r.oG = l1 + l2;
  r.oH = l1 + l2 + l;
  r.oz = l1 + l2 + 2 * l;
  r.cols = r.oz + mz;
  r.A = Mat::Zero(p.m, r.cols);
  r.Ax = Mat::Zero(p.n, r.cols);
  r.A.middleCols(r.og, l1) = e.g.jac_u.transpose();
  r.A.middleCols(r.oh, l2) = e.h.jac_u.transpose();
  r.A.middleCols(r.oG, l) = -e.G.jac_u.transpose();
  r.A.middleCols(r.oH, l) = -e.H.jac_u.transpose();
  if (mz) r.A.middleCols(r.oz, mz).setIdentity();
  r.Ax.middleCols(r.og, l1) = e.g.jac_x.transpose();
  r.Ax.middleCols(r.oh, l2) = e.h.jac_x.transpose();
  r.Ax.middleCols(r.oG, l) = -e.G.jac_x.transpose();
  r.Ax.middleCols(r.oH, l) = -e.H.jac_x.transpose();
  r.b = e.phi.jac_u.transpose() * pk - lambda0 * e.F.grad_u;
  r.phi_x = e.phi.jac_x;
  r.phi_u = e.phi.jac_u;
  r.F_x = e.F.grad_x;

  r.signs.assign(static_cast<std::size_t>(r.cols), VarSign::Free);
  if (ctx.ok) {
    for (int i : ctx.sets.i_minus) r.signs[static_cast<std::size_t>(r.og + i)] = VarSign::Zero;
    for (int i : ctx.sets.i_zero) r.signs[static_cast<std::size_t>(r.og + i)] = VarSign::NonNegative;
    for (int i : ctx.sets.i_plus0) r.signs[static_cast<std::size_t>(r.oG + i)] = VarSign::Zero;
    for (int i : ctx.sets.i_0plus) r.signs[static_cast<std::size_t>(r.oH + i)] = VarSign::Zero;
  } else {
    for (int i = 0; i < l1; ++i) r.signs[static_cast<std::size_t>(r.og + i)] = VarSign::NonNegative;
  }
  for (int j = 0; j < mz; ++j) {
    const int face = ctx.u_face.empty() ? 0 : ctx.u_face[static_cast<std::size_t>(j)];
    r.signs[static_cast<std::size_t>(r.oz + j)] = face == -1  ? VarSign::NonPositive
                                                  : face == 1 ? VarSign::NonNegative
                                                  : face == 2 ? VarSign::Free
                                                              : VarSign::Zero;
  }
  return r;
}

NodeMultipliers unpack_multipliers(const OcpecProblem& p, const URow& r, const Vec& v) {
  NodeMultipliers m;
  m.lam_g = v.segment(r.og, p.l1);
  m.lam_h = v.segment(r.oh, p.l2);
  m.lam_G = v.segment(r.oG, p.l);
  m.lam_H = v.segment(r.oH, p.l);
  m.zeta = v.segment(r.oz, zeta_count(p));
  m.residual = (r.A * v - r.b).norm();
  return m;
}

struct Sweep {
  Mat p;
  std::vector<URow> rows;
  std::vector<detail::SignedLsqResult> lsq;
  std::vector<Vec> m;
};

// Backward pass from p_N. corrections[k] is added to the least-squares
// multipliers at node k; it must lie in the kernel of the free columns.
Sweep sweep(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0, const Vec& pN,
            const std::vector<NodeContext>& ctx, const std::vector<Vec>* corrections) {
  const int N = traj.intervals();
  Sweep s;
  s.p.resize(p.n, N + 1);
  s.rows.resize(static_cast<std::size_t>(N + 1));
  s.lsq.resize(static_cast<std::size_t>(N + 1));
  s.m.resize(static_cast<std::size_t>(N + 1));
  s.p.col(N) = pN;
  for (int k = N; k >= 0; --k) {
    const auto ks = static_cast<std::size_t>(k);
    const Vec pk = s.p.col(k);
    s.rows[ks] = build_urow(p, traj, k, pk, lambda0, ctx[ks]);
    const URow& r = s.rows[ks];
    s.lsq[ks] = detail::signed_least_squares(r.A, r.b, r.signs);
    s.m[ks] = s.lsq[ks].v;
    if (corrections && (*corrections)[ks].size() == r.cols) s.m[ks] += (*corrections)[ks];
    if (k > 0) {
      const double h = traj.t(k) - traj.t(k - 1);
      s.p.col(k - 1) = pk + h * (r.phi_x.transpose() * pk - lambda0 * r.F_x - r.Ax * s.m[ks]);
    }
  }
  return s;
}

// Requirement on xi0 = p_0 - lambda0 grad_x0 f per component:
// 0 none (fixed), 1 equality, 2 xi >= 0 (upper bound), 3 xi <= 0 (lower).
std::vector<int> initial_requirements(const OcpecProblem& p, const Vec& x0, double tol) {
  std::vector<int> req(static_cast<std::size_t>(p.n), 1);
  for (int i = 0; i < p.n; ++i) {
    const double lo = p.endpoint.x0_lo(i), hi = p.endpoint.x0_hi(i);
    if (lo == hi) {
      req[static_cast<std::size_t>(i)] = 0;
    } else if (std::isfinite(hi) && x0(i) >= hi - tol) {
      req[static_cast<std::size_t>(i)] = 2;
    } else if (std::isfinite(lo) && x0(i) <= lo + tol) {
      req[static_cast<std::size_t>(i)] = 3;
    }
  }
  return req;
}

double requirement_violation(const std::vector<int>& req, const Vec& xi) {
  double v = 0.0;
  for (std::size_t i = 0; i < req.size(); ++i) {
    const double x = xi(static_cast<Eigen::Index>(i));
    if (req[i] == 1) v = std::max(v, std::abs(x));
    if (req[i] == 2) v = std::max(v, -x);
    if (req[i] == 3) v = std::max(v, x);
  }
  return v;
}

Vec initial_xi(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0, const Mat& P) {
  const int N = traj.intervals();
  const EndpointEval f = p.endpoint_cost(traj.x.col(0), traj.x.col(N));
  return P.col(0) - lambda0 * f.grad_x0;
}

Recovery finish(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0,
                const Sweep& s, std::vector<NodeContext> ctx, double tol_act) {
  const int N = traj.intervals();
  Recovery rec;
  rec.context = std::move(ctx);
  rec.arc.p = s.p;
  rec.arc.lambda0 = lambda0;
  const EndpointEval f = p.endpoint_cost(traj.x.col(0), traj.x.col(N));
  rec.arc.xi0 = s.p.col(0) - lambda0 * f.grad_x0;
  rec.arc.xi1 = -s.p.col(N) - lambda0 * f.grad_x1;
  double tr = requirement_violation(initial_requirements(p, traj.x.col(0), tol_act), rec.arc.xi0);
  for (int i = 0; i < p.n; ++i) {
    if (p.endpoint.x1_lo(i) != p.endpoint.x1_hi(i)) tr = std::max(tr, std::abs(rec.arc.xi1(i)));
  }
  rec.arc.transversality_residual = tr;
  rec.arc.nontrivial = lambda0 > 0 || s.p.cwiseAbs().maxCoeff() > 1e-12;
  rec.lambda.nodes.reserve(static_cast<std::size_t>(N + 1));
  for (int k = 0; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    rec.lambda.nodes.push_back(unpack_multipliers(p, s.rows[ks], s.m[ks]));
  }
  return rec;
}

std::vector<NodeContext> contexts(const OcpecProblem& p, const DiscreteTrajectory& traj,
                                  double tol_act) {
  std::vector<NodeContext> ctx;
  for (int k = 0; k <= traj.intervals(); ++k) ctx.push_back(node_context(p, traj, k, tol_act));
  return ctx;
}

// Embeds pinv of the used columns so that dm = P db to first order.
Mat used_pinv(const URow& r, const detail::SignedLsqResult& lsq) {
  std::vector<Eigen::Index> used;
  for (Eigen::Index j = 0; j < r.cols; ++j) {
    if (lsq.used[static_cast<std::size_t>(j)]) used.push_back(j);
  }
  Mat P = Mat::Zero(r.cols, r.A.rows());
  if (used.empty() || r.A.rows() == 0) return P;
  Mat AU(r.A.rows(), static_cast<Eigen::Index>(used.size()));
  for (std::size_t c = 0; c < used.size(); ++c) AU.col(static_cast<Eigen::Index>(c)) = r.A.col(used[c]);
  const Mat PU = detail::pseudo_inverse(AU);
  for (std::size_t c = 0; c < used.size(); ++c) P.row(used[c]) = PU.row(static_cast<Eigen::Index>(c));
  return P;
}

Mat free_kernel(const URow& r) {
  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index j = 0; j < r.cols; ++j) {
    if (r.signs[static_cast<std::size_t>(j)] == VarSign::Free) free_idx.push_back(j);
  }
  if (free_idx.empty()) return Mat::Zero(r.cols, 0);
  Mat AF(r.A.rows(), static_cast<Eigen::Index>(free_idx.size()));
  for (std::size_t c = 0; c < free_idx.size(); ++c) AF.col(static_cast<Eigen::Index>(c)) = r.A.col(free_idx[c]);
  Mat KF;
  if (AF.rows() == 0) {
    KF = Mat::Identity(AF.cols(), AF.cols());
  } else {
    KF = detail::null_space(AF);
  }
  Mat K = Mat::Zero(r.cols, KF.cols());
  for (std::size_t c = 0; c < free_idx.size(); ++c) K.row(free_idx[c]) = KF.row(static_cast<Eigen::Index>(c));
  return K;
}

Recovery explicit_terminal(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0,
                           const RecoveryOptions& opts, std::vector<NodeContext> ctx) {
  const int N = traj.intervals();
  const EndpointEval f = p.endpoint_cost(traj.x.col(0), traj.x.col(N));
  const Vec pN = -lambda0 * f.grad_x1;
  const std::vector<int> req = initial_requirements(p, traj.x.col(0), opts.tol_act);

  std::vector<Vec> corr(static_cast<std::size_t>(N + 1));
  Sweep s = sweep(p, traj, lambda0, pN, ctx, nullptr);
  for (int k = 0; k <= N; ++k) corr[static_cast<std::size_t>(k)] = Vec::Zero(s.rows[static_cast<std::size_t>(k)].cols);
  int iterations = 0;
  std::vector<int> eq(req);  // sign rows promoted to equalities once violated
  for (; iterations < 20; ++iterations) {
    const Vec xi = initial_xi(p, traj, lambda0, s.p);
    const double scale = 1.0 + xi.cwiseAbs().maxCoeff();
    std::vector<Eigen::Index> rows;
    for (int i = 0; i < p.n; ++i) {
      auto& e = eq[static_cast<std::size_t>(i)];
      if ((e == 2 && xi(i) < -1e-13 * scale) || (e == 3 && xi(i) > 1e-13 * scale)) e = 1;
      if (e == 1 && std::abs(xi(i)) > 1e-14 * scale) rows.push_back(i);
    }
    if (rows.empty()) break;

    // p_0 sensitivity to kernel coefficients at nodes 1..N through the
    // transfer matrices Phi_k = I + h (phi_x' - Ax P phi_u').
    std::vector<Mat> K(static_cast<std::size_t>(N + 1));
    Eigen::Index total = 0;
    for (int k = 1; k <= N; ++k) {
      K[static_cast<std::size_t>(k)] = free_kernel(s.rows[static_cast<std::size_t>(k)]);
      total += K[static_cast<std::size_t>(k)].cols();
    }
    if (total == 0) break;
    Mat J(p.n, total);
    Mat T = Mat::Identity(p.n, p.n);
    Eigen::Index col = 0;
    for (int k = 1; k <= N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const URow& r = s.rows[ks];
      const double h = traj.t(k) - traj.t(k - 1);
      const Mat& Kk = K[ks];
      if (Kk.cols()) {
        J.middleCols(col, Kk.cols()) = T * (-h * r.Ax * Kk);
        col += Kk.cols();
      }
      const Mat Phi = Mat::Identity(p.n, p.n) +
                      h * (r.phi_x.transpose() - r.Ax * used_pinv(r, s.lsq[ks]) * r.phi_u.transpose());
      T = T * Phi;
    }
    Mat JE(static_cast<Eigen::Index>(rows.size()), total);
    Vec rhs(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      JE.row(static_cast<Eigen::Index>(i)) = J.row(rows[i]);
      rhs(static_cast<Eigen::Index>(i)) = -xi(rows[i]);
    }
    const Vec c = detail::min_norm_solve(JE, rhs);
    if (!c.allFinite() || c.cwiseAbs().maxCoeff() == 0.0) break;
    col = 0;
    for (int k = 1; k <= N; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const Mat& Kk = K[ks];
      if (Kk.cols()) {
        corr[ks] += Kk * c.segment(col, Kk.cols());
        col += Kk.cols();
      }
    }
    const double before = requirement_violation(eq, xi);
    Sweep next = sweep(p, traj, lambda0, pN, ctx, &corr);
    const double after = requirement_violation(eq, initial_xi(p, traj, lambda0, next.p));
    s = std::move(next);
    if (after >= before) break;
  }
  Recovery rec = finish(p, traj, lambda0, s, std::move(ctx), opts.tol_act);
  rec.arc.terminal = "explicit";
  rec.arc.correction_iterations = iterations;
  return rec;
}

// Residual vector of the shooting problem: every u-row residual plus the
// initial transversality defect.
Vec shooting_residual(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0,
                      const Vec& pN, const std::vector<NodeContext>& ctx, double tol_act) {
  const Sweep s = sweep(p, traj, lambda0, pN, ctx, nullptr);
  const int N = traj.intervals();
  std::vector<double> r;
  for (int k = 0; k <= N; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Vec rk = s.rows[ks].A * s.m[ks] - s.rows[ks].b;
    for (Eigen::Index i = 0; i < rk.size(); ++i) r.push_back(rk(i));
  }
  const std::vector<int> req = initial_requirements(p, traj.x.col(0), tol_act);
  const Vec xi = initial_xi(p, traj, lambda0, s.p);
  for (int i = 0; i < p.n; ++i) {
    const int q = req[static_cast<std::size_t>(i)];
    r.push_back(q == 1 ? xi(i) : q == 2 ? std::min(xi(i), 0.0) : q == 3 ? std::max(xi(i), 0.0) : 0.0);
  }
  return Eigen::Map<Vec>(r.data(), static_cast<Eigen::Index>(r.size()));
}

Recovery shooting_terminal(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0,
                           const RecoveryOptions& opts, std::vector<NodeContext> ctx) {
  const int N = traj.intervals();
  const EndpointEval f = p.endpoint_cost(traj.x.col(0), traj.x.col(N));
  std::vector<int> fixed;
  for (int i = 0; i < p.n; ++i) {
    if (p.endpoint.x1_lo(i) == p.endpoint.x1_hi(i)) fixed.push_back(i);
  }
  Vec pN = -lambda0 * f.grad_x1;
  const auto nf = static_cast<Eigen::Index>(fixed.size());
  auto with = [&](const Vec& v) {
    Vec q = pN;
    for (Eigen::Index i = 0; i < nf; ++i) q(fixed[static_cast<std::size_t>(i)]) = v(i);
    return q;
  };
  Vec v(nf);
  for (Eigen::Index i = 0; i < nf; ++i) v(i) = pN(fixed[static_cast<std::size_t>(i)]);
  int iterations = 0;

  if (lambda0 == 0 && nf > 0) {
    // Homogeneous system: take the unit vector with the smallest residual.
    const Vec r0 = shooting_residual(p, traj, 0, with(Vec::Zero(nf)), ctx, opts.tol_act);
    Mat S(r0.size(), nf);
    for (Eigen::Index j = 0; j < nf; ++j) {
      S.col(j) = shooting_residual(p, traj, 0, with(Vec::Unit(nf, j)), ctx, opts.tol_act) - r0;
    }
    Eigen::JacobiSVD<Mat> svd(S, Eigen::ComputeFullV);
    v = svd.matrixV().col(nf - 1);
    for (Eigen::Index i = 0; i < nf; ++i) {
      if (std::abs(v(i)) > 1e-12) {
        if (v(i) < 0) v = -v;
        break;
      }
    }
    iterations = 1;
  } else if (nf > 0) {
    Vec r = shooting_residual(p, traj, lambda0, with(v), ctx, opts.tol_act);
    for (; iterations < 30 && r.norm() > 1e-13; ++iterations) {
      Mat S(r.size(), nf);
      for (Eigen::Index j = 0; j < nf; ++j) {
        const double step = 1e-6 * (1.0 + std::abs(v(j)));
        Vec vp = v;
        vp(j) += step;
        S.col(j) = (shooting_residual(p, traj, lambda0, with(vp), ctx, opts.tol_act) - r) / step;
      }
      const Vec dv = detail::min_norm_solve(S, -r);
      double alpha = 1.0;
      bool improved = false;
      for (int ls = 0; ls < 20; ++ls) {
        const Vec cand = v + alpha * dv;
        const Vec rc = shooting_residual(p, traj, lambda0, with(cand), ctx, opts.tol_act);
        if (rc.norm() < r.norm()) {
          v = cand;
          r = rc;
          improved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!improved) break;
    }
  }
  const Sweep s = sweep(p, traj, lambda0, with(v), ctx, nullptr);
  Recovery rec = finish(p, traj, lambda0, s, std::move(ctx), opts.tol_act);
  rec.arc.terminal = "shooting";
  rec.arc.correction_iterations = iterations;
  return rec;
}

double hamiltonian(const OcpecProblem& p, double t, const Vec& x, const Vec& u, const Vec& pk,
                   int lambda0) {
  return pk.dot(p.dynamics(t, x, u).value) - lambda0 * p.running_cost(t, x, u).value;
}

}  // namespace

NodeContext node_context(const OcpecProblem& p, const DiscreteTrajectory& traj, int k,
                         double tol_act) {
  NodeContext ctx;
  const Vec x = traj.x.col(k), u = traj.u.col(k);
  const double t = traj.t(k);
  try {
    ctx.sets = classify_indices(p.g(t, x, u).value, p.G(t, x, u).value, p.H(t, x, u).value, tol_act);
  } catch (const Error& e) {
    ctx.ok = false;
    ctx.error = e.what();
    ctx.sets.tol_act = tol_act;
  }
  if (p.control_set.bounded) {
    ctx.u_face.assign(static_cast<std::size_t>(p.m), 0);
    for (int j = 0; j < p.m; ++j) {
      const double lo = p.control_set.lo(j), hi = p.control_set.hi(j);
      auto& f = ctx.u_face[static_cast<std::size_t>(j)];
      if (lo == hi) f = 2;
      else if (u(j) <= lo + tol_act) f = -1;
      else if (u(j) >= hi - tol_act) f = 1;
    }
  }
  return ctx;
}

Recovery recover_adjoint(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0,
                         const RecoveryOptions& opts) {
  if (lambda0 != 0 && lambda0 != 1) throw Error(ErrorCode::InvalidArgument, "lambda0 must be 0 or 1");
  if (traj.x.rows() != p.n || traj.u.rows() != p.m || traj.u.cols() != traj.nodes()) {
    throw Error(ErrorCode::DimensionMismatch, "trajectory does not match the problem");
  }
  std::vector<NodeContext> ctx = contexts(p, traj, opts.tol_act);
  if (p.endpoint.final_free()) return explicit_terminal(p, traj, lambda0, opts, std::move(ctx));
  return shooting_terminal(p, traj, lambda0, opts, std::move(ctx));
}

Recovery recover_adjoint_from(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0,
                              const Vec& pN, const RecoveryOptions& opts) {
  std::vector<NodeContext> ctx = contexts(p, traj, opts.tol_act);
  const Sweep s = sweep(p, traj, lambda0, pN, ctx, nullptr);
  Recovery rec = finish(p, traj, lambda0, s, std::move(ctx), opts.tol_act);
  rec.arc.terminal = "prescribed";
  return rec;
}

EtaResult hamiltonian_multipliers(const OcpecProblem& p, const DiscreteTrajectory& traj,
                                  const AdjointArc& adj, int node, const RecoveryOptions& opts) {
  return hamiltonian_multipliers(p, traj, adj, node_context(p, traj, node, opts.tol_act), node, opts);
}

EtaResult hamiltonian_multipliers(const OcpecProblem& p, const DiscreteTrajectory& traj,
                                  const AdjointArc& adj, const NodeContext& ctx, int node,
                                  const RecoveryOptions& opts) {
  const URow r = build_urow(p, traj, node, adj.p.col(node), adj.lambda0, ctx);
  EtaResult out;
  const std::vector<int>& deg = ctx.sets.i_00;
  const int kdeg = ctx.ok ? static_cast<int>(deg.size()) : 0;
  const double tie = 1e-12 * (1.0 + r.b.norm());

  auto solve_branches = [&](int options, detail::SignedLsqResult& best, std::vector<int>& best_code) {
    long total = 1;
    for (int i = 0; i < kdeg; ++i) total *= options;
    bool have = false;
    int best_s = -1;
    std::vector<int> code(static_cast<std::size_t>(kdeg), 0);
    for (long b = 0; b < total; ++b) {
      long rem = b;
      for (int i = 0; i < kdeg; ++i) {
        code[static_cast<std::size_t>(i)] = static_cast<int>(rem % options);
        rem /= options;
      }
      std::vector<VarSign> signs = r.signs;
      int s_count = 0;
      for (int i = 0; i < kdeg; ++i) {
        const auto cG = static_cast<std::size_t>(r.oG + deg[static_cast<std::size_t>(i)]);
        const auto cH = static_cast<std::size_t>(r.oH + deg[static_cast<std::size_t>(i)]);
        switch (code[static_cast<std::size_t>(i)]) {
          case 0: signs[cG] = VarSign::Zero; break;
          case 1: signs[cH] = VarSign::Zero; break;
          case 2: signs[cG] = signs[cH] = VarSign::NonNegative; ++s_count; break;
          default: signs[cG] = signs[cH] = VarSign::NonPositive; break;
        }
      }
      const detail::SignedLsqResult res = detail::signed_least_squares(r.A, r.b, signs);
      ++out.branches_examined;
      const bool better = !have || res.residual < best.residual - tie ||
                          (res.residual <= best.residual + tie && s_count > best_s);
      if (better) {
        best = res;
        best_code = code;
        best_s = s_count;
        have = true;
      }
    }
  };

  detail::SignedLsqResult best;
  std::vector<int> code;
  solve_branches(3, best, code);
  out.m_feasible = best.residual <= opts.tol_recover;
  if (!out.m_feasible && kdeg > 0) {
    detail::SignedLsqResult best_c;
    std::vector<int> code_c;
    solve_branches(4, best_c, code_c);
    if (best_c.residual <= opts.tol_recover) {
      best = best_c;
      code = code_c;
      out.c_fallback = true;
    } else {
      // Neither cone admits a solution: fall back to the unsigned system.
      best = detail::signed_least_squares(r.A, r.b, r.signs);
      code.assign(static_cast<std::size_t>(kdeg), -1);
    }
  }
  out.branch = code;
  out.eta = unpack_multipliers(p, r, best.v);
  out.label = node_label(out.eta, ctx, opts);
  return out;
}

Stationarity node_label(const NodeMultipliers& mult, const NodeContext& ctx,
                        const RecoveryOptions& opts) {
  if (!ctx.ok || !(mult.residual <= opts.tol_recover)) return Stationarity::Failed;
  Stationarity label = Stationarity::S;
  for (int i : ctx.sets.i_00) {
    label = std::min(label, strongest(sign_class(mult.lam_G(i), mult.lam_H(i), opts.tol_sign)));
  }
  return label;
}

Stationarity aggregate_label(const std::vector<Stationarity>& labels, double eps) {
  if (labels.empty()) return Stationarity::Failed;
  for (Stationarity L : {Stationarity::S, Stationarity::M, Stationarity::C, Stationarity::W}) {
    const auto count = std::count_if(labels.begin(), labels.end(), [L](Stationarity s) { return s >= L; });
    if (static_cast<double>(count) >= (1.0 - eps) * static_cast<double>(labels.size()) - 1e-12) return L;
  }
  return Stationarity::Failed;
}

StationarityReport classify(const MultiplierSet& lambda, const MultiplierSet& eta,
                            const std::vector<NodeContext>& ctx, const RecoveryOptions& opts) {
  if (lambda.nodes.size() != eta.nodes.size() || lambda.nodes.size() != ctx.size()) {
    throw Error(ErrorCode::DimensionMismatch, "classify: inconsistent node counts");
  }
  StationarityReport rep;
  rep.eps_meas = opts.eps_meas;
  rep.tol_div = opts.tol_div;
  for (std::size_t k = 0; k < ctx.size(); ++k) {
    const NodeMultipliers& a = lambda.nodes[k];
    const NodeMultipliers& b = eta.nodes[k];
    rep.label_lambda.push_back(node_label(a, ctx[k], opts));
    rep.label_eta.push_back(node_label(b, ctx[k], opts));
    rep.residual_lambda.push_back(a.residual);
    rep.residual_eta.push_back(b.residual);
    double gap = 0.0;
    auto upd = [&gap](const Vec& x, const Vec& y) {
      if (x.size()) gap = std::max(gap, (x - y).cwiseAbs().maxCoeff());
    };
    upd(a.lam_g, b.lam_g);
    upd(a.lam_h, b.lam_h);
    upd(a.lam_G, b.lam_G);
    upd(a.lam_H, b.lam_H);
    rep.divergence_gap.push_back(gap);
    if (gap > opts.tol_div) rep.divergence_nodes.push_back(static_cast<int>(k));
  }
  rep.divergence_fraction = ctx.empty() ? 0.0
                                        : static_cast<double>(rep.divergence_nodes.size()) /
                                              static_cast<double>(ctx.size());
  rep.aggregate_lambda = aggregate_label(rep.label_lambda, opts.eps_meas);
  rep.aggregate_eta = aggregate_label(rep.label_eta, opts.eps_meas);
  return rep;
}

namespace {

struct FeasibilityCheck {
  bool ok = false;
  Vec u;
};

// Gauss-Newton onto the face selected at the start point; face[i] is 0 for
// G_i = 0, 1 for H_i = 0, 2 for both, -1 to choose by project_C.
FeasibilityCheck repair(const OcpecProblem& p, double t, const Vec& x, Vec u, std::vector<int> face) {
  auto clamp = [&](Vec& v) {
    if (p.control_set.bounded) v = v.cwiseMax(p.control_set.lo).cwiseMin(p.control_set.hi);
  };
  clamp(u);
  const int l = p.l;
  {
    const Vec G = p.G(t, x, u).value, H = p.H(t, x, u).value;
    const Projection pr = project_C(G, H);
    for (int i = 0; i < l; ++i) {
      if (face[static_cast<std::size_t>(i)] >= 0) continue;
      face[static_cast<std::size_t>(i)] = (pr.a(i) == 0.0 && pr.b(i) == 0.0) ? 2 : (pr.a(i) == 0.0 ? 0 : 1);
    }
  }
  // Iterate on the step size, not the residual: degenerate faces converge
  // only linearly and a small residual can hide a sizable distance. Without
  // convergence the point is rejected; on an empty face (x - u^2 = 0 with
  // x < 0) the iterates wander at the scale sqrt|x| with tiny residuals.
  bool converged = false;
  for (int it = 0; it < 120 && !converged; ++it) {
    const VectorEval eg = p.g(t, x, u), eh = p.h(t, x, u), eG = p.G(t, x, u), eH = p.H(t, x, u);
    std::vector<double> c;
    std::vector<Vec> rows;
    for (int i = 0; i < p.l2; ++i) {
      c.push_back(eh.value(i));
      rows.push_back(eh.jac_u.row(i).transpose());
    }
    for (int i = 0; i < p.l1; ++i) {
      if (eg.value(i) > 0.0) {
        c.push_back(eg.value(i));
        rows.push_back(eg.jac_u.row(i).transpose());
      }
    }
    for (int i = 0; i < l; ++i) {
      const int f = face[static_cast<std::size_t>(i)];
      if (f == 0 || f == 2) {
        c.push_back(eG.value(i));
        rows.push_back(eG.jac_u.row(i).transpose());
      }
      if (f == 1 || f == 2) {
        c.push_back(eH.value(i));
        rows.push_back(eH.jac_u.row(i).transpose());
      }
    }
    Vec cv = Eigen::Map<Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
    if (c.empty() || cv.cwiseAbs().maxCoeff() == 0.0) {
      converged = true;
      break;
    }
    Mat J(static_cast<Eigen::Index>(rows.size()), p.m);
    for (std::size_t r = 0; r < rows.size(); ++r) J.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    const Vec du = detail::min_norm_solve(J, -cv);
    if (!du.allFinite()) break;
    u += du;
    clamp(u);
    converged = du.cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + u.cwiseAbs().maxCoeff());
  }
  FeasibilityCheck out;
  out.u = u;
  const Vec G = p.G(t, x, u).value, H = p.H(t, x, u).value;
  const Vec g = p.g(t, x, u).value, h = p.h(t, x, u).value;
  const double tol = 1e-9;
  bool ok = converged && u.allFinite();
  if (l) ok = ok && G.minCoeff() >= -tol && H.minCoeff() >= -tol && G.cwiseProduct(H).cwiseAbs().maxCoeff() <= tol;
  if (p.l1) ok = ok && g.maxCoeff() <= tol;
  if (p.l2) ok = ok && h.cwiseAbs().maxCoeff() <= tol;
  out.ok = ok;
  return out;
}

}  // namespace

WeierstrassReport weierstrass_check(const OcpecProblem& p, const DiscreteTrajectory& traj,
                                    const AdjointArc& adj, int samples, std::mt19937_64& rng,
                                    double tol_w, double default_radius) {
  WeierstrassReport rep;
  rep.radius_was_infinite = !std::isfinite(p.radius);
  rep.radius_used = rep.radius_was_infinite ? default_radius : p.radius;
  rep.samples_per_node = samples;
  const double R = rep.radius_used;
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const int l = p.l;
  const int patterns = l <= 6 ? (1 << l) : 0;

  for (int k = 0; k <= traj.intervals(); ++k) {
    WeierstrassNode wn;
    wn.node = k;
    const double t = traj.t(k);
    const Vec x = traj.x.col(k), ustar = traj.u.col(k), pk = adj.p.col(k);
    const double H0 = hamiltonian(p, t, x, ustar, pk, adj.lambda0);
    wn.best_gain = -kInf;
    auto consider = [&](const FeasibilityCheck& fc) {
      if (!fc.ok || !((fc.u - ustar).norm() < R)) return;
      ++wn.feasible_samples;
      const double gain = hamiltonian(p, t, x, fc.u, pk, adj.lambda0) - H0;
      if (gain > wn.best_gain) {
        wn.best_gain = gain;
        wn.best_u = fc.u;
      }
    };
    for (int s = 0; s < samples; ++s) {
      Vec d(p.m);
      for (int j = 0; j < p.m; ++j) d(j) = nd(rng);
      const double nrm = d.norm();
      if (nrm == 0.0) continue;
      const double radius = R * std::pow(ud(rng), 1.0 / std::max(1, p.m));
      const Vec u = ustar + (radius / nrm) * d;
      consider(repair(p, t, x, u, std::vector<int>(static_cast<std::size_t>(l), -1)));
    }
    for (int pat = 0; pat < patterns; ++pat) {
      std::vector<int> face(static_cast<std::size_t>(l));
      for (int i = 0; i < l; ++i) face[static_cast<std::size_t>(i)] = (pat >> i) & 1;
      consider(repair(p, t, x, ustar, face));
    }
    if (wn.feasible_samples == 0) {
      wn.best_gain = 0.0;
      rep.unsampled.push_back(k);
    } else if (wn.best_gain > tol_w) {
      wn.violation = true;
      rep.violations.push_back(k);
    }
    rep.nodes.push_back(std::move(wn));
  }
  return rep;
}

FjCrosscheck classical_fj_crosscheck(const OcpecProblem& p, const DiscreteTrajectory& traj,
                                     const AdjointArc& adj, const MultiplierSet& lambda,
                                     const MultiplierSet& eta, const std::vector<NodeContext>& ctx,
                                     int node, const RecoveryOptions& opts) {
  FjCrosscheck out;
  const auto ks = static_cast<std::size_t>(node);
  const NodeMultipliers& lm = lambda.nodes.at(ks);
  const NodeMultipliers& em = eta.nodes.at(ks);
  const NodeContext& c = ctx.at(ks);
  if (node_label(lm, c, opts) != Stationarity::S) return out;
  double gap = 0.0;
  if (p.l) gap = std::max((lm.lam_G - em.lam_G).cwiseAbs().maxCoeff(), (lm.lam_H - em.lam_H).cwiseAbs().maxCoeff());
  if (p.l1) gap = std::max(gap, (lm.lam_g - em.lam_g).cwiseAbs().maxCoeff());
  if (p.l2) gap = std::max(gap, (lm.lam_h - em.lam_h).cwiseAbs().maxCoeff());
  if (gap > opts.tol_div) return out;
  out.invoked = true;

  const double t = traj.t(node);
  const Vec x = traj.x.col(node), u = traj.u.col(node);
  const detail::NodeEval e = detail::eval_node(p, t, x, u);
  const Vec& G = e.G.value;
  const Vec& H = e.H.value;

  // Smallest c >= 0 making both transformed multipliers nonnegative on the
  // nondegenerate indices.
  double cc = 0.0;
  for (int i : c.sets.i_0plus) cc = std::max(cc, -lm.lam_G(i) / H(i));
  for (int i : c.sets.i_plus0) cc = std::max(cc, -lm.lam_H(i) / G(i));
  out.c = cc;
  out.a = lm.lam_G + cc * H;
  out.b = lm.lam_H + cc * G;

  double res = 0.0;
  if (p.l) {
    res = std::max(res, -out.a.minCoeff());
    res = std::max(res, -out.b.minCoeff());
    res = std::max(res, out.a.cwiseProduct(G).cwiseAbs().maxCoeff());
    res = std::max(res, out.b.cwiseProduct(H).cwiseAbs().maxCoeff());
    res = std::max(res, std::abs(cc * G.dot(H)));
  }
  const Vec pk = adj.p.col(node);
  const int lambda0 = adj.lambda0;
  Vec urow = -e.phi.jac_u.transpose() * pk + lambda0 * e.F.grad_u + e.g.jac_u.transpose() * lm.lam_g +
             e.h.jac_u.transpose() * lm.lam_h - e.G.jac_u.transpose() * out.a -
             e.H.jac_u.transpose() * out.b +
             cc * (e.G.jac_u.transpose() * H + e.H.jac_u.transpose() * G);
  if (lm.zeta.size()) urow += lm.zeta;
  const Vec psi_x = e.g.jac_x.transpose() * lm.lam_g + e.h.jac_x.transpose() * lm.lam_h -
                    e.G.jac_x.transpose() * lm.lam_G - e.H.jac_x.transpose() * lm.lam_H;
  const Vec cpcp_x = e.g.jac_x.transpose() * lm.lam_g + e.h.jac_x.transpose() * lm.lam_h -
                     e.G.jac_x.transpose() * out.a - e.H.jac_x.transpose() * out.b +
                     cc * (e.G.jac_x.transpose() * H + e.H.jac_x.transpose() * G);
  if (urow.size()) res = std::max(res, urow.cwiseAbs().maxCoeff());
  if (psi_x.size()) res = std::max(res, (psi_x - cpcp_x).cwiseAbs().maxCoeff());
  out.residual = res;
  out.ok = res <= 1e-8;
  return out;
}

}  // namespace ocpec
