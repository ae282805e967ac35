#pragma once

#include "ocpec/problem.hpp"

#include <Eigen/SparseCore>

#include <string>
#include <vector>

namespace ocpec {

using SpMat = Eigen::SparseMatrix<double>;

// Euler transcription on the uniform grid t_k = t0 + k h, k = 0..N.
// Decision vector z = (x_0, .., x_N, u_0, .., u_{N-1}).
// Per control node k < N:
//   equalities   d_k = x_{k+1} - x_k - h phi(t_k, x_k, u_k),  h(t_k, x_k, u_k)
//   inequalities g <= 0, -G <= 0, -H <= 0 (and G o H - tau <= 0 once relaxed)
// Objective: sum_k h F(t_k, x_k, u_k) + f(x_0, x_N).
struct FiniteMpec {
  ProblemPtr problem;
  int N = 0;
  double h = 0.0;
  Vec lower, upper;  // simple bounds on z (endpoint boxes, control box)

  int n() const { return problem->n; }
  int m() const { return problem->m; }
  int size() const { return problem->n * (N + 1) + problem->m * N; }
  int x_index(int k, int i = 0) const { return k * problem->n + i; }
  int u_index(int k, int j = 0) const { return problem->n * (N + 1) + k * problem->m + j; }
  double time(int k) const { return k == N ? problem->t1 : problem->t0 + k * h; }
  int equalities_per_node() const { return problem->n + problem->l2; }
  int inequalities_per_node() const { return problem->l1 + 3 * problem->l; }
  int num_equalities() const { return N * equalities_per_node(); }
  // Without relaxation the G o H rows are omitted.
  int num_inequalities(bool relaxed) const {
    return N * (problem->l1 + (relaxed ? 3 : 2) * problem->l);
  }
};

FiniteMpec discretize(ProblemPtr p, int N);

Vec pack(const FiniteMpec& fm, const DiscreteTrajectory& traj);
// Controls at node N are copied from node N-1; see complete_final_control.
DiscreteTrajectory unpack(const FiniteMpec& fm, const Vec& z);

// Sets u_N: the LCP solution at x_N for the linear kind, else u_{N-1}.
void complete_final_control(const OcpecProblem& p, DiscreteTrajectory& traj);

double objective(const FiniteMpec& fm, const Vec& z, Vec* grad = nullptr);
Vec equality_constraints(const FiniteMpec& fm, const Vec& z, SpMat* jac = nullptr);
// tau < 0 selects the unrelaxed system.
Vec inequality_constraints(const FiniteMpec& fm, const Vec& z, double tau, SpMat* jac = nullptr);

struct ResidualReport {
  double dynamics = 0.0;         // max |Euler defect|
  double g = 0.0;                // max(g, 0)
  double h = 0.0;                // max |h|
  double G = 0.0;                // max(-G, 0)
  double H = 0.0;                // max(-H, 0)
  double complementarity = 0.0;  // max |G_i H_i|
  double bounds = 0.0;           // distance of z outside its box
  double max() const;
};

ResidualReport residuals(const FiniteMpec& fm, const Vec& z);
// Same families over the stored trajectory; with include_final_node the pair
// at node N (using the completed u_N) is also checked.
ResidualReport residuals(const FiniteMpec& fm, const DiscreteTrajectory& traj,
                         bool include_final_node = false);

struct HomotopySchedule {
  double tau0 = 1e-1;
  double factor = 0.1;
  double tau_min = 1e-8;
  int max_outer = 40;
  int max_inner = 200;
  int stall_iterations = 50;
  double rho0 = 10.0;
  double rho_max = 1e12;
  double feasibility_tol = 1e-10;
  bool polish = true;
};

struct StageInfo {
  double tau = 0.0;
  double complementarity = 0.0;  // max_{i,k} G_i H_i
  double first_order = 0.0;      // projected AL gradient at exit
  double feasibility = 0.0;      // max constraint violation at exit
  double rho = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;
  bool accepted = false;
  std::string status;  // converged | max_outer | stalled
};

// Final tightened solve: pairs with G_i or H_i below the identification
// threshold are pinned to the corresponding face and the resulting NLP is
// solved from the last homotopy iterate.
struct PolishInfo {
  bool attempted = false;
  bool applied = false;
  double threshold = 0.0;
  int pinned_g = 0, pinned_h = 0, pinned_both = 0;
  double first_order = 0.0;
  double feasibility = 0.0;
  double objective_change = 0.0;
  double move = 0.0;  // ||z_polished - z_homotopy||_inf
};

struct SolveInfo {
  std::string status;  // converged | stalled | max_outer
  std::vector<StageInfo> stages;
  PolishInfo polish;
  double objective = 0.0;
  double complementarity = 0.0;
  double first_order = 0.0;
  ResidualReport residuals;
  int iterations = 0;
  bool initial_guess_from_simulation = false;
};

struct SolveResult {
  DiscreteTrajectory trajectory;
  SolveInfo info;
};

SolveResult solve_homotopy(const FiniteMpec& fm, const HomotopySchedule& sched = {});
SolveResult solve_homotopy(const FiniteMpec& fm, const HomotopySchedule& sched, const Vec& z0);

}  // namespace ocpec

namespace ocpec::detail {

// All oracle values at one control node.
struct NodeEval {
  VectorEval phi, g, h, G, H;
  ScalarEval F;
};

NodeEval eval_node(const OcpecProblem& p, double t, const Vec& x, const Vec& u);

// Values (and optionally Jacobians) of every transcription function at z in
// one sweep over the nodes.
struct Assembly {
  double J = 0.0;
  Vec gradJ;
  Vec cE, cI;
  SpMat JE, JI;
  std::vector<NodeEval> nodes;
};

// Branch pins for the tightened problem, one entry per (node, pair). The
// last inequality row of a pair becomes G_i H_i - tau (Relaxed), G_i (PinG),
// H_i (PinH) or G_i + H_i (PinBoth); with G, H >= 0 the pinned rows force the
// corresponding components to zero.
Vec tail_weights_G(const NodeEval& e, const std::vector<int>* pins, int k, int l);
Vec tail_weights_H(const NodeEval& e, const std::vector<int>* pins, int k, int l);

enum Pin : int { Relaxed = 0, PinG = 1, PinH = 2, PinBoth = 3 };

Assembly assemble(const FiniteMpec& fm, const Vec& z, double tau, bool with_derivatives,
                  const std::vector<int>* pins = nullptr);

}  // namespace ocpec::detail
