#include "ocpec/lcp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ocpec {

const char* to_string(LcpStatus s) {
  switch (s) {
    case LcpStatus::Solved: return "solved";
    case LcpStatus::RayTermination: return "ray_termination";
    case LcpStatus::CycleLimit: return "cycle_limit";
  }
  return "unknown";
}

double lcp_residual(const LcpInstance& inst, const Vec& z) {
  if (z.size() == 0) return 0.0;
  const Vec w = inst.M * z + inst.q;
  double r = std::max(0.0, -z.minCoeff());
  r = std::max(r, -w.minCoeff());
  r = std::max(r, z.cwiseProduct(w).cwiseAbs().maxCoeff());
  return r;
}

namespace {

// Re-solve the principal system of the final basis; pivoting drifts by a few
// ulps per step and the acceptance tolerance is absolute.
void polish(const LcpInstance& inst, Vec& z, double tol) {
  const Eigen::Index l = z.size();
  std::vector<Eigen::Index> S;
  for (Eigen::Index i = 0; i < l; ++i) {
    if (z(i) > tol) S.push_back(i);
  }
  if (S.empty()) return;
  const auto k = static_cast<Eigen::Index>(S.size());
  Mat Mss(k, k);
  Vec qs(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    qs(a) = inst.q(S[a]);
    for (Eigen::Index b = 0; b < k; ++b) Mss(a, b) = inst.M(S[a], S[b]);
  }
  const Vec zs = Mss.fullPivLu().solve(-qs);
  if (!zs.allFinite()) return;
  Vec cand = Vec::Zero(l);
  for (Eigen::Index a = 0; a < k; ++a) cand(S[a]) = zs(a);
  if (lcp_residual(inst, cand) <= lcp_residual(inst, z)) z = cand;
}

}  // namespace

LcpSolution lemke(const LcpInstance& inst, int max_pivots) {
  const Eigen::Index l = inst.q.size();
  if (inst.M.rows() != l || inst.M.cols() != l) {
    throw Error(ErrorCode::DimensionMismatch, "LCP matrix must be square and match q");
  }
  if (max_pivots < 1) throw Error(ErrorCode::InvalidArgument, "max_pivots must be >= 1");
  if (!inst.M.allFinite() || !inst.q.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "LCP data must be finite");
  }

  LcpSolution sol;
  sol.z = Vec::Zero(l);
  if (l == 0 || inst.q.minCoeff() >= 0.0) {
    sol.w = inst.q;
    return sol;
  }

  const double scale = std::max({1.0, inst.M.cwiseAbs().maxCoeff(), inst.q.cwiseAbs().maxCoeff()});
  const double piv_tol = 1e-12 * scale;

  // Variables: w_i -> i, z_i -> l + i, z0 -> 2l. Tableau [I, -M, -e | q].
  const Eigen::Index z0 = 2 * l;
  const Eigen::Index rhs = 2 * l + 1;
  Mat T = Mat::Zero(l, 2 * l + 2);
  T.leftCols(l).setIdentity();
  T.block(0, l, l, l) = -inst.M;
  T.col(z0).setConstant(-1.0);
  T.col(rhs) = inst.q;
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(l));
  for (Eigen::Index i = 0; i < l; ++i) basis[static_cast<std::size_t>(i)] = i;

  auto pivot = [&](Eigen::Index r, Eigen::Index c) {
    T.row(r) /= T(r, c);
    for (Eigen::Index i = 0; i < l; ++i) {
      if (i != r && T(i, c) != 0.0) T.row(i) -= T(i, c) * T.row(r);
    }
    basis[static_cast<std::size_t>(r)] = c;
  };

  Eigen::Index r0 = 0;
  inst.q.minCoeff(&r0);
  Eigen::Index leaving = basis[static_cast<std::size_t>(r0)];
  pivot(r0, z0);
  sol.pivots = 1;
  int degenerate_run = 0;
  bool bland = false;

  while (true) {
    const Eigen::Index entering = leaving < l ? leaving + l : leaving - l;
    if (sol.pivots >= max_pivots) {
      sol.status = LcpStatus::CycleLimit;
      break;
    }
    Eigen::Index row = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < l; ++i) {
      const double a = T(i, entering);
      if (a <= piv_tol) continue;
      const double ratio = std::max(T(i, rhs), 0.0) / a;
      if (row < 0 || ratio < best - 1e-14 * scale) {
        row = i;
        best = ratio;
        continue;
      }
      if (ratio > best + 1e-14 * scale) continue;
      // Tie.
      const Eigen::Index bi = basis[static_cast<std::size_t>(i)];
      const Eigen::Index br = basis[static_cast<std::size_t>(row)];
      if (br == z0) continue;
      if (bi == z0) {
        row = i;
      } else if (bland ? bi < br : a > T(row, entering)) {
        row = i;
      }
    }
    if (row < 0) {
      sol.status = LcpStatus::RayTermination;
      break;
    }
    degenerate_run = best <= 1e-14 * scale ? degenerate_run + 1 : 0;
    if (degenerate_run > 3 * l) bland = true;
    leaving = basis[static_cast<std::size_t>(row)];
    pivot(row, entering);
    ++sol.pivots;
    if (leaving == z0) {
      sol.status = LcpStatus::Solved;
      break;
    }
  }

  for (Eigen::Index i = 0; i < l; ++i) {
    const Eigen::Index b = basis[static_cast<std::size_t>(i)];
    if (b >= l && b < 2 * l) sol.z(b - l) = std::max(T(i, rhs), 0.0);
  }
  if (sol.status == LcpStatus::Solved) polish(inst, sol.z, 1e-14 * scale);
  sol.w = inst.M * sol.z + inst.q;
  return sol;
}

DiscreteTrajectory simulate_lcs(const OcpecProblem& p, int N) {
  return simulate_lcs(p, N, p.initial_state());
}

DiscreteTrajectory simulate_lcs(const OcpecProblem& p, int N, const Vec& x0) {
  if (!p.linear) {
    throw Error(ErrorCode::InvalidArgument, "simulate_lcs requires a linear_lcs problem");
  }
  if (N < 2) throw Error(ErrorCode::InvalidArgument, "N must be >= 2");
  if (x0.size() != p.n) throw Error(ErrorCode::DimensionMismatch, "x0 length");
  const LinearLcsData& d = *p.linear;
  const double h = (p.t1 - p.t0) / N;
  DiscreteTrajectory tr;
  tr.t.resize(N + 1);
  tr.x.resize(p.n, N + 1);
  tr.u.resize(p.m, N + 1);
  tr.x.col(0) = x0;
  LcpInstance inst{d.D, Vec()};
  for (int k = 0; k <= N; ++k) {
    tr.t(k) = p.t0 + k * h;
    inst.q = d.C * tr.x.col(k) + d.q;
    const LcpSolution s = lemke(inst);
    const double res = lcp_residual(inst, s.z);
    if (s.status != LcpStatus::Solved || res > 1e-10 * std::max(1.0, inst.q.cwiseAbs().maxCoeff())) {
      std::ostringstream os;
      os << "LCP at node " << k << " (t=" << tr.t(k) << ") failed: " << to_string(s.status)
         << ", residual " << res;
      throw Error(ErrorCode::LcpFailure, os.str());
    }
    tr.u.col(k) = s.z;
    if (k < N) {
      tr.x.col(k + 1) = tr.x.col(k) + h * (d.A * tr.x.col(k) + d.B * s.z + d.c);
    }
  }
  tr.t(N) = p.t1;
  return tr;
}

}  // namespace ocpec
