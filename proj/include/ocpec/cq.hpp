#pragma once

#include "ocpec/compgeom.hpp"
#include "ocpec/detail/linalg.hpp"
#include "ocpec/problem.hpp"
#include "ocpec/stationarity.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ocpec {

// Constraint gradients at one node. Rows are constraints; the u blocks have
// m columns and the x blocks n columns.
struct NodeGradients {
  Mat g_u, h_u, G_u, H_u;
  Mat g_x, h_x, G_x, H_x;
  IndexSets sets;
  std::vector<int> u_face;  // as in NodeContext; empty when U = R^m
  int m() const { return static_cast<int>(G_u.cols()); }
};

NodeGradients node_gradients(const OcpecProblem& p, const DiscreteTrajectory& traj, int node,
                             double tol_act);

struct LicqResult {
  bool holds = false;
  double min_singular_value = 0.0;
  int rows = 0;
};

// Active g rows, all h rows, G rows on I0+ and I00, H rows on I+0 and I00,
// and unit rows for control components sitting on a bound.
Mat licq_family(const NodeGradients& ng);
LicqResult mpec_licq(const NodeGradients& ng, double tol_sv = 1e-8);

enum class QuasiNormality { HoldsViaNoMultiplier, Inconclusive };
const char* to_string(QuasiNormality q);

struct AbnormalResult {
  QuasiNormality verdict = QuasiNormality::HoldsViaNoMultiplier;
  std::optional<NodeMultipliers> witness;  // normalized to unit max-norm
  std::vector<int> witness_branch;
  int branches_examined = 0;
  // The weaker condition only asks grad_x Psi . witness = 0.
  bool witness_violates_wbcq = false;
  double witness_grad_x_norm = 0.0;
};

// Sign pattern of the abnormal system on one branch. code[i] refers to the
// i-th degenerate index: 0 mu = 0, 1 nu = 0, 2 mu, nu >= 0.
std::vector<detail::VarSign> abnormal_signs(const NodeGradients& ng, const std::vector<int>& code);
// Columns [lam_g | lam_h | mu | nu | zeta] of grad_u Psi + N_U.
Mat abnormal_matrix(const NodeGradients& ng);

AbnormalResult no_abnormal_multiplier(const NodeGradients& ng);

struct KappaResult {
  double kappa = 0.0;  // +inf when unbounded
  int patterns = 0;
  bool face_exact = true;  // bounds on open cone branches come from their faces
};

KappaResult kappa_estimate(const NodeGradients& ng, const AbnormalResult& qn);

struct SlopeResult {
  double k_S = 0.0;
  double k_g = 0.0, k_h = 0.0, k_G = 0.0, k_H = 0.0;
  std::string method;  // "operator_norm" or "sampling"
  int samples = 0;
  double tube = 0.0;
};

bool linear_condition(const OcpecProblem& p);

struct CqOptions {
  double tol_act = 1e-6;
  double tol_sv = 1e-8;
  double tube = 1e-1;
  int tube_samples = 1000;
};

SlopeResult bounded_slope(const OcpecProblem& p, const DiscreteTrajectory& traj, int node,
                          double kappa, const CqOptions& opts, std::mt19937_64& rng);

struct CqVerdict {
  int node = 0;
  bool ok = true;
  std::string error;
  LicqResult licq;
  AbnormalResult quasi_normality;
  KappaResult kappa;
  SlopeResult slope;
  bool linear_condition = false;
  bool error_bound_certified = false;
};

CqVerdict audit_node(const OcpecProblem& p, const DiscreteTrajectory& traj, int node,
                     const CqOptions& opts, std::mt19937_64& rng);
std::vector<CqVerdict> audit(const OcpecProblem& p, const DiscreteTrajectory& traj,
                             const CqOptions& opts, std::mt19937_64& rng);

}  // namespace ocpec
