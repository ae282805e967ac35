#include "ocpec/lcp.hpp"
#include "ocpec/transcribe.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>

namespace ocpec {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

struct Multipliers {
  Vec lamE, muI;
  double rho = 10.0;
};

Vec project(const FiniteMpec& fm, const Vec& z) {
  return z.cwiseMax(fm.lower).cwiseMin(fm.upper);
}

double violation(const detail::Assembly& a) {
  double v = a.cE.size() ? a.cE.cwiseAbs().maxCoeff() : 0.0;
  if (a.cI.size()) v = std::max(v, a.cI.maxCoeff());
  return std::max(v, 0.0);
}

double comp_residual(const FiniteMpec& fm, const detail::Assembly& a) {
  double c = 0.0;
  for (const auto& e : a.nodes) {
    if (e.G.value.size()) c = std::max(c, e.G.value.cwiseProduct(e.H.value).maxCoeff());
  }
  (void)fm;
  return c;
}

double merit(const detail::Assembly& a, const Multipliers& mp) {
  double L = a.J + mp.lamE.dot(a.cE) + 0.5 * mp.rho * a.cE.squaredNorm();
  for (Eigen::Index i = 0; i < a.cI.size(); ++i) {
    const double s = std::max(0.0, mp.muI(i) + mp.rho * a.cI(i));
    L += (s * s - mp.muI(i) * mp.muI(i)) / (2.0 * mp.rho);
  }
  return L;
}

struct MeritDerivs {
  Vec grad, yE, yI;
};

MeritDerivs merit_gradient(const detail::Assembly& a, const Multipliers& mp) {
  MeritDerivs d;
  d.yE = mp.lamE + mp.rho * a.cE;
  d.yI = (mp.muI + mp.rho * a.cI).cwiseMax(0.0);
  d.grad = a.gradJ + a.JE.transpose() * d.yE + a.JI.transpose() * d.yI;
  return d;
}

double projected_gradient_norm(const FiniteMpec& fm, const Vec& z, const Vec& grad) {
  if (z.size() == 0) return 0.0;
  return (z - project(fm, z - grad)).cwiseAbs().maxCoeff();
}

// Gradient w.r.t. (x_k, u_k) of the node-local part of sum_i y_i c_i + h F.
Vec node_weighted_gradient(const FiniteMpec& fm, int k, const Vec& x, const Vec& u,
                           const Vec& yE, const Vec& yI, bool relaxed,
                           const std::vector<int>* pins) {
  const OcpecProblem& p = *fm.problem;
  const int n = p.n, m = p.m, l = p.l, l1 = p.l1, l2 = p.l2;
  const double h = fm.h;
  const detail::NodeEval e = detail::eval_node(p, fm.time(k), x, u);
  const Vec yd = yE.head(n), yh = yE.segment(n, l2);
  const Vec yg = yI.head(l1), yG = yI.segment(l1, l), yH = yI.segment(l1 + l, l);
  Vec gx = h * e.F.grad_x - h * e.phi.jac_x.transpose() * yd + e.h.jac_x.transpose() * yh +
           e.g.jac_x.transpose() * yg - e.G.jac_x.transpose() * yG - e.H.jac_x.transpose() * yH;
  Vec gu = h * e.F.grad_u - h * e.phi.jac_u.transpose() * yd + e.h.jac_u.transpose() * yh +
           e.g.jac_u.transpose() * yg - e.G.jac_u.transpose() * yG - e.H.jac_u.transpose() * yH;
  if (relaxed) {
    const Vec yP = yI.segment(l1 + 2 * l, l);
    const Vec wG = detail::tail_weights_G(e, pins, k, l), wH = detail::tail_weights_H(e, pins, k, l);
    gx += (wG.asDiagonal() * e.G.jac_x + wH.asDiagonal() * e.H.jac_x).transpose() * yP;
    gu += (wG.asDiagonal() * e.G.jac_u + wH.asDiagonal() * e.H.jac_u).transpose() * yP;
  }
  Vec out(n + m);
  out << gx, gu;
  return out;
}

void add_block(Triplets& t, const std::vector<int>& idx, const Mat& B) {
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double v = B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (v != 0.0) t.emplace_back(idx[i], idx[j], v);
    }
  }
}

// Hessian of the augmented Lagrangian: second-order terms of the weighted
// node functions (exact product terms for the linear kind, central finite
// differences of the analytic gradient otherwise) plus the rho J'J part.
SpMat merit_hessian(const FiniteMpec& fm, const Vec& z, const detail::Assembly& a,
                    const Multipliers& mp, const MeritDerivs& d, double tau,
                    const std::vector<int>* pins) {
  const OcpecProblem& p = *fm.problem;
  const int n = p.n, m = p.m, l = p.l, l1 = p.l1;
  const bool relaxed = tau >= 0.0;
  const int ne = fm.equalities_per_node();
  const int ni = l1 + (relaxed ? 3 : 2) * l;
  Triplets t;

  for (int k = 0; k < fm.N; ++k) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) idx.push_back(fm.x_index(k, i));
    for (int j = 0; j < m; ++j) idx.push_back(fm.u_index(k, j));
    const Vec yE = d.yE.segment(k * ne, ne);
    const Vec yI = d.yI.segment(k * ni, ni);
    Mat B = Mat::Zero(n + m, n + m);
    if (p.linear) {
      if (relaxed) {
        const auto& e = a.nodes[static_cast<std::size_t>(k)];
        for (int i = 0; i < l; ++i) {
          const double y = yI(l1 + 2 * l + i);
          if (y == 0.0 || (pins && (*pins)[static_cast<std::size_t>(k * l + i)] != detail::Relaxed)) {
            continue;
          }
          Vec gG(n + m), gH(n + m);
          gG << e.G.jac_x.row(i).transpose(), e.G.jac_u.row(i).transpose();
          gH << e.H.jac_x.row(i).transpose(), e.H.jac_u.row(i).transpose();
          B += y * (gG * gH.transpose() + gH * gG.transpose());
        }
      }
    } else {
      const Vec x = z.segment(fm.x_index(k), n);
      const Vec u = z.segment(fm.u_index(k), m);
      for (int j = 0; j < n + m; ++j) {
        Vec xp = x, xm = x, up = u, um = u;
        double step;
        if (j < n) {
          step = 1e-6 * (1.0 + std::abs(x(j)));
          xp(j) += step;
          xm(j) -= step;
        } else {
          step = 1e-6 * (1.0 + std::abs(u(j - n)));
          up(j - n) += step;
          um(j - n) -= step;
        }
        B.col(j) = (node_weighted_gradient(fm, k, xp, up, yE, yI, relaxed, pins) -
                    node_weighted_gradient(fm, k, xm, um, yE, yI, relaxed, pins)) /
                   (2.0 * step);
      }
      B = 0.5 * (B + B.transpose()).eval();
    }
    add_block(t, idx, B);
  }

  // Endpoint cost.
  {
    const Vec x0 = z.segment(fm.x_index(0), n);
    const Vec xN = z.segment(fm.x_index(fm.N), n);
    Mat B(2 * n, 2 * n);
    auto grad = [&](const Vec& a0, const Vec& a1) {
      const EndpointEval f = p.endpoint_cost(a0, a1);
      Vec g(2 * n);
      g << f.grad_x0, f.grad_x1;
      return g;
    };
    for (int j = 0; j < 2 * n; ++j) {
      Vec p0 = x0, m0 = x0, p1 = xN, m1 = xN;
      double step;
      if (j < n) {
        step = 1e-6 * (1.0 + std::abs(x0(j)));
        p0(j) += step;
        m0(j) -= step;
      } else {
        step = 1e-6 * (1.0 + std::abs(xN(j - n)));
        p1(j - n) += step;
        m1(j - n) -= step;
      }
      B.col(j) = (grad(p0, p1) - grad(m0, m1)) / (2.0 * step);
    }
    B = 0.5 * (B + B.transpose()).eval();
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) idx.push_back(fm.x_index(0, i));
    for (int i = 0; i < n; ++i) idx.push_back(fm.x_index(fm.N, i));
    add_block(t, idx, B);
  }

  SpMat H(fm.size(), fm.size());
  H.setFromTriplets(t.begin(), t.end());
  std::vector<Eigen::Triplet<double>> act;
  for (Eigen::Index i = 0; i < a.cI.size(); ++i) {
    if (mp.muI(i) + mp.rho * a.cI(i) > 0.0) act.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
  }
  SpMat Dact(a.cI.size(), a.cI.size());
  Dact.setFromTriplets(act.begin(), act.end());
  const SpMat JIa = Dact * a.JI;
  SpMat GN = SpMat(a.JE.transpose() * a.JE) + SpMat(JIa.transpose() * JIa);
  H += mp.rho * GN;
  return H;
}

struct InnerResult {
  int iterations = 0;
  double first_order = 0.0;
  bool stalled = false;
};

// Bertsekas projected Newton on the box with Armijo search along the
// projection arc; falls back to a projected gradient step.
InnerResult inner_solve(const FiniteMpec& fm, Vec& z, const Multipliers& mp, double tau,
                        double tol, const HomotopySchedule& sched,
                        const std::vector<int>* pins) {
  InnerResult res;
  detail::Assembly a = detail::assemble(fm, z, tau, true, pins);
  double L = merit(a, mp);
  double best_L = L;
  int since_decrease = 0;

  for (int it = 0; it < sched.max_inner; ++it) {
    const MeritDerivs d = merit_gradient(a, mp);
    res.first_order = projected_gradient_norm(fm, z, d.grad);
    if (res.first_order <= tol) return res;

    const double eps = std::min(1e-3, res.first_order);
    const Eigen::Index nz = z.size();
    std::vector<bool> active(static_cast<std::size_t>(nz), false);
    for (Eigen::Index i = 0; i < nz; ++i) {
      active[static_cast<std::size_t>(i)] = (z(i) <= fm.lower(i) + eps && d.grad(i) > 0.0) ||
                                            (z(i) >= fm.upper(i) - eps && d.grad(i) < 0.0);
    }

    const SpMat H = merit_hessian(fm, z, a, mp, d, tau, pins);
    Triplets t;
    double diag_scale = 1.0;
    for (int c = 0; c < H.outerSize(); ++c) {
      for (SpMat::InnerIterator itH(H, c); itH; ++itH) {
        const auto r = itH.row(), cc = itH.col();
        if (active[static_cast<std::size_t>(r)] || active[static_cast<std::size_t>(cc)]) continue;
        t.emplace_back(static_cast<int>(r), static_cast<int>(cc), itH.value());
        if (r == cc) diag_scale = std::max(diag_scale, std::abs(itH.value()));
      }
    }
    Vec rhs = -d.grad;
    Vec dir = Vec::Zero(nz);
    for (Eigen::Index i = 0; i < nz; ++i) {
      if (active[static_cast<std::size_t>(i)]) {
        t.emplace_back(static_cast<int>(i), static_cast<int>(i), 1.0);
        rhs(i) = 0.0;
        dir(i) = -d.grad(i);
      }
    }
    SpMat K(nz, nz);
    K.setFromTriplets(t.begin(), t.end());
    SpMat I(nz, nz);
    I.setIdentity();
    bool solved = false;
    double delta = 0.0;
    for (int attempt = 0; attempt < 25 && !solved; ++attempt) {
      Eigen::SimplicialLDLT<SpMat> ldlt;
      ldlt.compute(delta > 0.0 ? SpMat(K + delta * I) : K);
      if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 1e-14 * diag_scale).all()) {
        Vec sol = ldlt.solve(rhs);
        if (sol.allFinite()) {
          for (Eigen::Index i = 0; i < nz; ++i) {
            if (!active[static_cast<std::size_t>(i)]) dir(i) = sol(i);
          }
          solved = true;
        }
      }
      delta = delta == 0.0 ? 1e-10 * diag_scale : delta * 10.0;
    }

    auto search = [&](const Vec& step_dir, Vec& z_new, detail::Assembly& a_new, double& L_new) {
      double alpha = 1.0;
      for (int ls = 0; ls < 40; ++ls) {
        z_new = project(fm, z + alpha * step_dir);
        const double slope = d.grad.dot(z_new - z);
        if (slope < 0.0) {
          a_new = detail::assemble(fm, z_new, tau, false, pins);
          L_new = merit(a_new, mp);
          if (std::isfinite(L_new) && L_new <= L + 1e-4 * slope) return true;
        }
        alpha *= 0.5;
      }
      return false;
    };

    Vec z_new;
    detail::Assembly a_new;
    double L_new = L;
    bool ok = solved && search(dir, z_new, a_new, L_new);
    if (!ok) ok = search(-d.grad, z_new, a_new, L_new);
    ++res.iterations;
    if (!ok) {
      res.stalled = true;
      return res;
    }
    z = z_new;
    a = detail::assemble(fm, z, tau, true, pins);
    L = L_new;
    if (L < best_L - 1e-15 * std::max(1.0, std::abs(best_L))) {
      best_L = L;
      since_decrease = 0;
    } else if (++since_decrease >= sched.stall_iterations) {
      res.stalled = true;
      break;
    }
  }
  res.first_order = projected_gradient_norm(fm, z, merit_gradient(a, mp).grad);
  return res;
}

}  // namespace

SolveResult solve_homotopy(const FiniteMpec& fm, const HomotopySchedule& sched) {
  const OcpecProblem& p = *fm.problem;
  Vec z0 = Vec::Zero(fm.size());
  bool from_sim = false;
  if (p.linear) {
    try {
      const DiscreteTrajectory sim = simulate_lcs(p, fm.N);
      z0 = pack(fm, sim);
      from_sim = true;
    } catch (const Error&) {
      z0.setZero();
    }
  }
  SolveResult r = solve_homotopy(fm, sched, project(fm, z0));
  r.info.initial_guess_from_simulation = from_sim;
  return r;
}

namespace {

StageInfo run_stage(const FiniteMpec& fm, Vec& z, Multipliers& mp, double tau, double stage_tol,
                    const HomotopySchedule& sched, const std::vector<int>* pins) {
  StageInfo st;
  st.tau = tau;
  double prev_viol = kInf;
  bool stalled = false;
  detail::Assembly a;
  for (int outer = 0; outer < sched.max_outer; ++outer) {
    const InnerResult ir = inner_solve(fm, z, mp, tau, 0.1 * stage_tol, sched, pins);
    st.inner_iterations += ir.iterations;
    st.outer_iterations = outer + 1;
    stalled = ir.stalled;
    a = detail::assemble(fm, z, tau, true, pins);
    st.first_order = ir.first_order;
    st.feasibility = violation(a);
    if (st.feasibility <= sched.feasibility_tol && st.first_order <= stage_tol) {
      st.status = "converged";
      break;
    }
    mp.lamE += mp.rho * a.cE;
    mp.muI = (mp.muI + mp.rho * a.cI).cwiseMax(0.0);
    if (st.feasibility > 0.25 * prev_viol) mp.rho = std::min(mp.rho * 10.0, sched.rho_max);
    prev_viol = st.feasibility;
  }
  if (st.status.empty()) st.status = stalled ? "stalled" : "max_outer";
  st.rho = mp.rho;
  st.complementarity = comp_residual(fm, a);
  return st;
}

}  // namespace

SolveResult solve_homotopy(const FiniteMpec& fm, const HomotopySchedule& sched, const Vec& z0) {
  if (!(sched.tau0 > 0.0) || !(sched.factor > 0.0 && sched.factor < 1.0) ||
      !(sched.tau_min > 0.0) || sched.tau_min > sched.tau0) {
    throw Error(ErrorCode::InvalidArgument,
                "homotopy schedule must have 0 < tau_min <= tau0 and 0 < factor < 1");
  }
  if (z0.size() != fm.size()) throw Error(ErrorCode::DimensionMismatch, "initial guess size");

  Vec z = project(fm, z0);
  Multipliers mp;
  mp.rho = sched.rho0;
  mp.lamE = Vec::Zero(fm.num_equalities());
  mp.muI = Vec::Zero(fm.num_inequalities(true));

  SolveInfo info;
  double last_accepted = kInf;
  std::vector<double> taus;
  for (double tau = sched.tau0; tau >= sched.tau_min * (1.0 - 1e-12); tau *= sched.factor) {
    taus.push_back(tau);
  }
  for (double tau : taus) {
    const double stage_tol = std::max(1e-8, tau * 1e-2);
    StageInfo st = run_stage(fm, z, mp, tau, stage_tol, sched, nullptr);
    // The relaxed rows hold to the feasibility tolerance only.
    st.accepted = st.first_order <= stage_tol &&
                  st.complementarity <= tau + sched.feasibility_tol &&
                  st.complementarity <= last_accepted;
    if (st.accepted) last_accepted = st.complementarity;
    info.iterations += st.inner_iterations;
    info.stages.push_back(st);
  }
  const StageInfo& last = info.stages.back();
  info.status = last.accepted && last.status == "converged" ? "converged" : last.status;

  const double J_homotopy = detail::assemble(fm, z, -1.0, false).J;
  if (sched.polish && fm.problem->l > 0) {
    PolishInfo& pi = info.polish;
    pi.attempted = true;
    pi.threshold = std::max(std::sqrt(sched.tau_min), 10.0 * sched.tau_min);
    const detail::Assembly a = detail::assemble(fm, z, -1.0, false);
    const int l = fm.problem->l;
    std::vector<int> pins(static_cast<std::size_t>(fm.N * l), detail::Relaxed);
    for (int k = 0; k < fm.N; ++k) {
      const auto& e = a.nodes[static_cast<std::size_t>(k)];
      for (int i = 0; i < l; ++i) {
        const double gv = e.G.value(i), hv = e.H.value(i);
        int pin;
        if (gv <= pi.threshold && hv <= pi.threshold) {
          pin = detail::PinBoth;
          ++pi.pinned_both;
        } else if (gv <= hv) {
          pin = detail::PinG;
          ++pi.pinned_g;
        } else {
          pin = detail::PinH;
          ++pi.pinned_h;
        }
        pins[static_cast<std::size_t>(k * l + i)] = pin;
      }
    }
    Vec zp = z;
    Multipliers mpp = mp;
    const int ni = fm.inequalities_per_node();
    for (int k = 0; k < fm.N; ++k) mpp.muI.segment(k * ni + fm.problem->l1 + 2 * l, l).setZero();
    const StageInfo st = run_stage(fm, zp, mpp, 0.0, 1e-8, sched, &pins);
    pi.first_order = st.first_order;
    pi.feasibility = st.feasibility;
    const double J_pol = detail::assemble(fm, zp, -1.0, false).J;
    pi.objective_change = J_pol - J_homotopy;
    pi.move = (zp - z).cwiseAbs().maxCoeff();
    info.iterations += st.inner_iterations;
    // Accept only a converged tightened solve that stays in the neighbourhood
    // the homotopy identified.
    pi.applied = st.status == "converged" && pi.move <= pi.threshold * 10.0 &&
                 pi.objective_change <= pi.threshold * (1.0 + std::abs(J_homotopy));
    if (pi.applied) {
      z = zp;
      if (info.status != "converged") info.status = "converged";
    }
  }

  const detail::Assembly a = detail::assemble(fm, z, -1.0, true);
  info.objective = a.J;
  info.complementarity = comp_residual(fm, a);
  info.first_order = info.stages.back().first_order;
  info.residuals = residuals(fm, z);

  SolveResult out;
  out.trajectory = unpack(fm, z);
  complete_final_control(*fm.problem, out.trajectory);
  out.info = std::move(info);
  return out;
}

}  // namespace ocpec
