#include "ocpec/transcribe.hpp"

#include "ocpec/lcp.hpp"

#include <algorithm>
#include <cmath>

namespace ocpec {

namespace detail {

// The tail row of pair i is linear in (G_i, H_i) with these coefficients to
// first order: (H_i, G_i) for the product, (1,0), (0,1), (1,1) when pinned.
Vec tail_weights_G(const NodeEval& e, const std::vector<int>* pins, int k, int l) {
  Vec w(l);
  for (int i = 0; i < l; ++i) {
    const int pin = pins ? (*pins)[static_cast<std::size_t>(k * l + i)] : Relaxed;
    w(i) = pin == Relaxed ? e.H.value(i) : (pin == PinH ? 0.0 : 1.0);
  }
  return w;
}

Vec tail_weights_H(const NodeEval& e, const std::vector<int>* pins, int k, int l) {
  Vec w(l);
  for (int i = 0; i < l; ++i) {
    const int pin = pins ? (*pins)[static_cast<std::size_t>(k * l + i)] : Relaxed;
    w(i) = pin == Relaxed ? e.G.value(i) : (pin == PinG ? 0.0 : 1.0);
  }
  return w;
}

NodeEval eval_node(const OcpecProblem& p, double t, const Vec& x, const Vec& u) {
  NodeEval e;
  e.phi = p.dynamics(t, x, u);
  e.g = p.g(t, x, u);
  e.h = p.h(t, x, u);
  e.G = p.G(t, x, u);
  e.H = p.H(t, x, u);
  e.F = p.running_cost(t, x, u);
  return e;
}

Assembly assemble(const FiniteMpec& fm, const Vec& z, double tau, bool with_derivatives,
                  const std::vector<int>* pins) {
  const OcpecProblem& p = *fm.problem;
  const int n = p.n, m = p.m, l = p.l, l1 = p.l1, l2 = p.l2;
  const int N = fm.N;
  const double h = fm.h;
  const bool relaxed = tau >= 0.0;
  const int ne = fm.equalities_per_node();
  const int ni = l1 + (relaxed ? 3 : 2) * l;

  Assembly a;
  a.cE.resize(N * ne);
  a.cI.resize(N * ni);
  a.nodes.reserve(static_cast<std::size_t>(N));
  std::vector<Eigen::Triplet<double>> tE, tI;
  if (with_derivatives) a.gradJ = Vec::Zero(fm.size());

  for (int k = 0; k < N; ++k) {
    const Vec x = z.segment(fm.x_index(k), n);
    const Vec u = z.segment(fm.u_index(k), m);
    const Vec x_next = z.segment(fm.x_index(k + 1), n);
    a.nodes.push_back(eval_node(p, fm.time(k), x, u));
    const NodeEval& e = a.nodes.back();

    a.J += h * e.F.value;
    const int re = k * ne;
    a.cE.segment(re, n) = x_next - x - h * e.phi.value;
    a.cE.segment(re + n, l2) = e.h.value;
    const int ri = k * ni;
    a.cI.segment(ri, l1) = e.g.value;
    a.cI.segment(ri + l1, l) = -e.G.value;
    a.cI.segment(ri + l1 + l, l) = -e.H.value;
    if (relaxed) {
      for (int i = 0; i < l; ++i) {
        const int pin = pins ? (*pins)[static_cast<std::size_t>(k * l + i)] : Relaxed;
        const double gv = e.G.value(i), hv = e.H.value(i);
        a.cI(ri + l1 + 2 * l + i) = pin == PinG    ? gv
                                    : pin == PinH  ? hv
                                    : pin == PinBoth ? gv + hv
                                                     : gv * hv - tau;
      }
    }

    if (!with_derivatives) continue;
    const int cx = fm.x_index(k), cu = fm.u_index(k), cx1 = fm.x_index(k + 1);
    a.gradJ.segment(cx, n) += h * e.F.grad_x;
    a.gradJ.segment(cu, m) += h * e.F.grad_u;

    auto put = [](std::vector<Eigen::Triplet<double>>& t, int r0, int c0, const Mat& M) {
      for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j) {
          if (M(i, j) != 0.0) {
            t.emplace_back(r0 + static_cast<int>(i), c0 + static_cast<int>(j), M(i, j));
          }
        }
      }
    };
    put(tE, re, cx, -Mat::Identity(n, n) - h * e.phi.jac_x);
    put(tE, re, cu, -h * e.phi.jac_u);
    put(tE, re, cx1, Mat::Identity(n, n));
    put(tE, re + n, cx, e.h.jac_x);
    put(tE, re + n, cu, e.h.jac_u);
    put(tI, ri, cx, e.g.jac_x);
    put(tI, ri, cu, e.g.jac_u);
    put(tI, ri + l1, cx, -e.G.jac_x);
    put(tI, ri + l1, cu, -e.G.jac_u);
    put(tI, ri + l1 + l, cx, -e.H.jac_x);
    put(tI, ri + l1 + l, cu, -e.H.jac_u);
    if (relaxed) {
      const Vec wG = tail_weights_G(e, pins, k, l), wH = tail_weights_H(e, pins, k, l);
      put(tI, ri + l1 + 2 * l, cx, wG.asDiagonal() * e.G.jac_x + wH.asDiagonal() * e.H.jac_x);
      put(tI, ri + l1 + 2 * l, cu, wG.asDiagonal() * e.G.jac_u + wH.asDiagonal() * e.H.jac_u);
    }
  }

  const Vec x0 = z.segment(fm.x_index(0), n);
  const Vec xN = z.segment(fm.x_index(N), n);
  const EndpointEval f = p.endpoint_cost(x0, xN);
  a.J += f.value;
  if (with_derivatives) {
    a.gradJ.segment(fm.x_index(0), n) += f.grad_x0;
    a.gradJ.segment(fm.x_index(N), n) += f.grad_x1;
    a.JE.resize(a.cE.size(), fm.size());
    a.JE.setFromTriplets(tE.begin(), tE.end());
    a.JI.resize(a.cI.size(), fm.size());
    a.JI.setFromTriplets(tI.begin(), tI.end());
  }
  return a;
}

}  // namespace detail

FiniteMpec discretize(ProblemPtr p, int N) {
  if (!p) throw Error(ErrorCode::InvalidArgument, "null problem");
  if (N < 2) throw Error(ErrorCode::InvalidArgument, "N must be >= 2");
  FiniteMpec fm;
  fm.problem = std::move(p);
  fm.N = N;
  fm.h = (fm.problem->t1 - fm.problem->t0) / N;
  const OcpecProblem& pr = *fm.problem;
  fm.lower = Vec::Constant(fm.size(), -kInf);
  fm.upper = Vec::Constant(fm.size(), kInf);
  fm.lower.segment(fm.x_index(0), pr.n) = pr.endpoint.x0_lo;
  fm.upper.segment(fm.x_index(0), pr.n) = pr.endpoint.x0_hi;
  fm.lower.segment(fm.x_index(N), pr.n) = pr.endpoint.x1_lo;
  fm.upper.segment(fm.x_index(N), pr.n) = pr.endpoint.x1_hi;
  if (pr.control_set.bounded) {
    for (int k = 0; k < N; ++k) {
      fm.lower.segment(fm.u_index(k), pr.m) = pr.control_set.lo;
      fm.upper.segment(fm.u_index(k), pr.m) = pr.control_set.hi;
    }
  }
  return fm;
}

Vec pack(const FiniteMpec& fm, const DiscreteTrajectory& traj) {
  const int n = fm.n(), m = fm.m();
  if (traj.nodes() != fm.N + 1 || traj.x.rows() != n || traj.u.rows() != m ||
      traj.x.cols() != fm.N + 1 || traj.u.cols() < fm.N) {
    throw Error(ErrorCode::DimensionMismatch, "trajectory does not match the transcription grid");
  }
  Vec z(fm.size());
  for (int k = 0; k <= fm.N; ++k) z.segment(fm.x_index(k), n) = traj.x.col(k);
  for (int k = 0; k < fm.N; ++k) z.segment(fm.u_index(k), m) = traj.u.col(k);
  return z;
}

DiscreteTrajectory unpack(const FiniteMpec& fm, const Vec& z) {
  const int n = fm.n(), m = fm.m(), N = fm.N;
  DiscreteTrajectory tr;
  tr.t.resize(N + 1);
  tr.x.resize(n, N + 1);
  tr.u.resize(m, N + 1);
  for (int k = 0; k <= N; ++k) {
    tr.t(k) = fm.time(k);
    tr.x.col(k) = z.segment(fm.x_index(k), n);
  }
  for (int k = 0; k < N; ++k) tr.u.col(k) = z.segment(fm.u_index(k), m);
  tr.u.col(N) = tr.u.col(N - 1);
  return tr;
}

void complete_final_control(const OcpecProblem& p, DiscreteTrajectory& traj) {
  const int N = traj.intervals();
  if (p.linear) {
    LcpInstance inst{p.linear->D, p.linear->C * traj.x.col(N) + p.linear->q};
    const LcpSolution s = lemke(inst);
    if (s.status == LcpStatus::Solved) {
      traj.u.col(N) = s.z;
      return;
    }
  }
  traj.u.col(N) = traj.u.col(N - 1);
}

double objective(const FiniteMpec& fm, const Vec& z, Vec* grad) {
  detail::Assembly a = detail::assemble(fm, z, -1.0, grad != nullptr);
  if (grad) *grad = std::move(a.gradJ);
  return a.J;
}

Vec equality_constraints(const FiniteMpec& fm, const Vec& z, SpMat* jac) {
  detail::Assembly a = detail::assemble(fm, z, -1.0, jac != nullptr);
  if (jac) *jac = std::move(a.JE);
  return a.cE;
}

Vec inequality_constraints(const FiniteMpec& fm, const Vec& z, double tau, SpMat* jac) {
  detail::Assembly a = detail::assemble(fm, z, tau, jac != nullptr);
  if (jac) *jac = std::move(a.JI);
  return a.cI;
}

double ResidualReport::max() const {
  return std::max({dynamics, g, h, G, H, complementarity, bounds});
}

namespace {

void accumulate_pair(ResidualReport& r, const detail::NodeEval& e) {
  if (e.g.value.size()) r.g = std::max(r.g, e.g.value.maxCoeff());
  if (e.h.value.size()) r.h = std::max(r.h, e.h.value.cwiseAbs().maxCoeff());
  if (e.G.value.size()) {
    r.G = std::max(r.G, -e.G.value.minCoeff());
    r.H = std::max(r.H, -e.H.value.minCoeff());
    r.complementarity =
        std::max(r.complementarity, e.G.value.cwiseProduct(e.H.value).cwiseAbs().maxCoeff());
  }
}

}  // namespace

ResidualReport residuals(const FiniteMpec& fm, const Vec& z) {
  if (z.size() != fm.size()) {
    throw Error(ErrorCode::DimensionMismatch, "point does not match the transcription layout");
  }
  const detail::Assembly a = detail::assemble(fm, z, -1.0, false);
  ResidualReport r;
  const int ne = fm.equalities_per_node();
  for (int k = 0; k < fm.N; ++k) {
    r.dynamics = std::max(r.dynamics, a.cE.segment(k * ne, fm.n()).cwiseAbs().maxCoeff());
    accumulate_pair(r, a.nodes[static_cast<std::size_t>(k)]);
  }
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    r.bounds = std::max({r.bounds, fm.lower(i) - z(i), z(i) - fm.upper(i)});
  }
  return r;
}

ResidualReport residuals(const FiniteMpec& fm, const DiscreteTrajectory& traj,
                         bool include_final_node) {
  ResidualReport r = residuals(fm, pack(fm, traj));
  if (include_final_node && traj.u.cols() == fm.N + 1) {
    const OcpecProblem& p = *fm.problem;
    accumulate_pair(r, detail::eval_node(p, fm.time(fm.N), traj.x.col(fm.N), traj.u.col(fm.N)));
    if (p.control_set.bounded) {
      const Vec uN = traj.u.col(fm.N);
      r.bounds = std::max({r.bounds, (p.control_set.lo - uN).maxCoeff(),
                           (uN - p.control_set.hi).maxCoeff()});
    }
  }
  return r;
}

}  // namespace ocpec
