#pragma once

#include "ocpec/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>

namespace ocpec {

// Value of a vector-valued oracle with its Jacobians at (t, x, u).
struct VectorEval {
  Vec value;
  Mat jac_x;  // rows = value size, cols = n
  Mat jac_u;  // rows = value size, cols = m
  Vec jac_t;  // partial derivative in t
};

struct ScalarEval {
  double value = 0.0;
  Vec grad_x;
  Vec grad_u;
  double grad_t = 0.0;
};

struct EndpointEval {
  double value = 0.0;
  Vec grad_x0;
  Vec grad_x1;
};

using VectorOracle = std::function<VectorEval(double, const Vec&, const Vec&)>;
using ScalarOracle = std::function<ScalarEval(double, const Vec&, const Vec&)>;
using EndpointOracle = std::function<EndpointEval(const Vec&, const Vec&)>;

// U(t): either all of R^m or a fixed box.
struct ControlSet {
  bool bounded = false;
  Vec lo;
  Vec hi;
};

// Endpoint set E = B0 x B1 with per-component boxes. Fixed components have
// lo == hi; free components have infinite bounds.
struct Endpoint {
  enum class Kind { FixedInitialFreeFinal, BoxInitialFreeFinal, FixedBoth };
  Kind kind = Kind::FixedInitialFreeFinal;
  Vec x0_lo, x0_hi;
  Vec x1_lo, x1_hi;

  bool final_free() const;
  static Endpoint fixed_initial(const Vec& x0);
  static Endpoint box_initial(const Vec& lo, const Vec& hi);
  static Endpoint fixed_both(const Vec& x0, const Vec& x1);
};

const char* to_string(Endpoint::Kind kind);

// Matrix data of the linear complementarity kind:
//   x' = A x + B u + c,  0 <= u  _|_  C x + D u + q >= 0,  cost 1/2 |x(t1) - T|^2.
struct LinearLcsData {
  Mat A, B, C, D;
  Vec c, q, target;
};

enum class ProblemKind { Counterexample, LinearLcs, Autonomized };

const char* to_string(ProblemKind kind);

struct OcpecProblem {
  std::string name;
  ProblemKind kind = ProblemKind::Counterexample;
  double t0 = 0.0, t1 = 1.0;
  int n = 0, m = 0, l = 0, l1 = 0, l2 = 0;

  VectorOracle dynamics;
  ScalarOracle running_cost;
  EndpointOracle endpoint_cost;
  VectorOracle g, h, G, H;

  ControlSet control_set;
  Endpoint endpoint;
  double radius = kInf;

  // g, h, G, H affine in (x, u) and U polyhedral.
  bool affine = false;
  // No explicit t-dependence anywhere.
  bool autonomous = true;
  std::optional<LinearLcsData> linear;

  // Initial state used by forward simulation: the projection of 0 onto the
  // x0 box (so fixed components return their value).
  Vec initial_state() const;
  void validate() const;
};

using ProblemPtr = std::shared_ptr<const OcpecProblem>;

// Psi = g'lam + h'ups - G'mu - H'nu and its (x, u) gradient.
struct PsiEval {
  double value = 0.0;
  Vec grad_x;
  Vec grad_u;
};

PsiEval evaluate_psi(const OcpecProblem& p, double t, const Vec& x, const Vec& u,
                     const Vec& lam_g, const Vec& lam_h, const Vec& lam_G, const Vec& lam_H);

OcpecProblem make_counterexample();
OcpecProblem make_linear_lcs(const LinearLcsData& data, double t0, double t1,
                             const Endpoint& endpoint, double radius = kInf);

// Registry lookup: "counterexample" or "linear_lcs" (the latter with the
// scalar default data A=0, B=1, c=-1, C=D=1, q=0, T=0, x0=1 on [0, 1]).
OcpecProblem builtin(const std::string& name);

// Appends sigma with sigma' = 1, sigma(t0) = t0 and routes all explicit time
// dependence through it.
OcpecProblem autonomize(const OcpecProblem& p);

OcpecProblem load_problem(const std::string& path);
OcpecProblem parse_problem(const std::string& json_text);

// Largest relative discrepancy between every oracle Jacobian and central
// finite differences (step 1e-6 (1 + |v|)) over random points.
struct DerivativeAudit {
  double max_rel_error = 0.0;
  std::string worst_oracle;
  int points = 0;
};

DerivativeAudit audit_derivatives(const OcpecProblem& p, int points, std::mt19937_64& rng,
                                  double spread = 1.0);

}  // namespace ocpec
