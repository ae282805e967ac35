#pragma once

#include "ocpec/compgeom.hpp"
#include "ocpec/problem.hpp"

#include <random>
#include <string>
#include <vector>

namespace ocpec {

struct RecoveryOptions {
  double tol_act = 1e-6;      // index-set classification
  double tol_recover = 1e-6;  // u-row residual gate
  double tol_sign = 1e-8;     // sign_class tolerance
  double tol_div = 1e-6;      // lambda vs eta divergence
  double eps_meas = 0.05;     // node fraction allowed to fall below the aggregate
};

struct NodeMultipliers {
  Vec lam_g, lam_h, lam_G, lam_H;
  Vec zeta;  // element of N_U(u) (empty when U = R^m)
  double residual = 0.0;
};

struct MultiplierSet {
  std::vector<NodeMultipliers> nodes;
};

// Classification data and u-row sign pattern at one node.
struct NodeContext {
  bool ok = true;
  std::string error;
  IndexSets sets;
  std::vector<int> u_face;  // -1 at lower bound, +1 at upper, 0 interior, 2 fixed
};

struct AdjointArc {
  Mat p;  // n x (N+1)
  int lambda0 = 1;
  Vec xi0, xi1;  // endpoint normal-cone elements
  double transversality_residual = 0.0;
  bool nontrivial = true;
  std::string terminal;  // "explicit" or "shooting"
  int correction_iterations = 0;
};

struct Recovery {
  AdjointArc arc;
  MultiplierSet lambda;
  std::vector<NodeContext> context;
};

NodeContext node_context(const OcpecProblem& p, const DiscreteTrajectory& traj, int k,
                         double tol_act);

// Discrete adjoint on the grid, stepping backward from p_N:
//   p_{k-1} = p_k + h (grad_x phi_k' p_k - lambda0 grad_x F_k - grad_x Psi_k . m_k),
// with m_k the sign-constrained least-squares solution of the u-row at node k,
//   0 = -grad_u phi_k' p_k + lambda0 grad_u F_k + grad_u Psi_k . m_k + zeta_k.
// Initial transversality is imposed through a minimum-norm correction of the
// free multiplier components at nodes 1..N.
Recovery recover_adjoint(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0,
                         const RecoveryOptions& opts = {});

// Same recursion from a prescribed p_N, without the initial correction.
Recovery recover_adjoint_from(const OcpecProblem& p, const DiscreteTrajectory& traj, int lambda0,
                              const Vec& pN, const RecoveryOptions& opts = {});

struct EtaResult {
  NodeMultipliers eta;
  bool m_feasible = false;   // some M branch meets tol_recover
  bool c_fallback = false;   // only the (<= 0, <= 0) branch did
  std::vector<int> branch;   // per degenerate index: 0 G=0, 1 H=0, 2 both >= 0, 3 both <= 0
  int branches_examined = 0;
  Stationarity label = Stationarity::Failed;
};

EtaResult hamiltonian_multipliers(const OcpecProblem& p, const DiscreteTrajectory& traj,
                                  const AdjointArc& adj, int node,
                                  const RecoveryOptions& opts = {});
EtaResult hamiltonian_multipliers(const OcpecProblem& p, const DiscreteTrajectory& traj,
                                  const AdjointArc& adj, const NodeContext& ctx, int node,
                                  const RecoveryOptions& opts = {});

Stationarity node_label(const NodeMultipliers& mult, const NodeContext& ctx,
                        const RecoveryOptions& opts);

struct StationarityReport {
  std::vector<Stationarity> label_lambda, label_eta;
  std::vector<double> residual_lambda, residual_eta;
  std::vector<double> divergence_gap;  // ||lambda - eta||_inf per node
  std::vector<int> divergence_nodes;
  double divergence_fraction = 0.0;
  Stationarity aggregate_lambda = Stationarity::Failed;
  Stationarity aggregate_eta = Stationarity::Failed;
  double eps_meas = 0.05;
  double tol_div = 1e-6;
};

StationarityReport classify(const MultiplierSet& lambda, const MultiplierSet& eta,
                            const std::vector<NodeContext>& ctx, const RecoveryOptions& opts = {});

// Strongest label L with at least (1 - eps) of the nodes labelled >= L.
Stationarity aggregate_label(const std::vector<Stationarity>& labels, double eps);

struct WeierstrassNode {
  int node = 0;
  int feasible_samples = 0;
  double best_gain = 0.0;  // max over samples of H(u) - H(u*)
  Vec best_u;
  bool violation = false;
};

struct WeierstrassReport {
  double radius_used = 0.0;
  bool radius_was_infinite = false;
  int samples_per_node = 0;
  std::vector<WeierstrassNode> nodes;
  std::vector<int> violations;
  std::vector<int> unsampled;
};

// Samples in the open ball ||u - u*_k|| < R (R = default_radius when the
// problem radius is infinite); infeasible samples are repaired onto the face
// chosen by project_C and kept only when the repaired point is feasible
// within 1e-9 and still strictly inside the ball.
WeierstrassReport weierstrass_check(const OcpecProblem& p, const DiscreteTrajectory& traj,
                                    const AdjointArc& adj, int samples, std::mt19937_64& rng,
                                    double tol_w = 1e-8, double default_radius = 10.0);

struct FjCrosscheck {
  bool invoked = false;  // false when the node is not S with lambda = eta
  bool ok = false;
  double residual = 0.0;
  Vec a, b;  // multipliers of -G <= 0 and -H <= 0
  double c = 0.0;  // multiplier of G'H <= 0
};

// Maps the lambda multipliers at an S node onto the inequality system
// G >= 0, H >= 0, G'H <= 0 and verifies its Fritz-John conditions.
FjCrosscheck classical_fj_crosscheck(const OcpecProblem& p, const DiscreteTrajectory& traj,
                                     const AdjointArc& adj, const MultiplierSet& lambda,
                                     const MultiplierSet& eta, const std::vector<NodeContext>& ctx,
                                     int node, const RecoveryOptions& opts = {});

}  // namespace ocpec
