#pragma once

#include "ocpec/problem.hpp"

namespace ocpec {

// Find z >= 0 with w = M z + q >= 0 and z'w = 0.
struct LcpInstance {
  Mat M;
  Vec q;
};

enum class LcpStatus { Solved, RayTermination, CycleLimit };

const char* to_string(LcpStatus s);

struct LcpSolution {
  Vec z, w;
  LcpStatus status = LcpStatus::Solved;
  int pivots = 0;
};

// max(-min z, -min w, max |z_i w_i|, ||w - (M z + q)||_inf)
double lcp_residual(const LcpInstance& inst, const Vec& z);

// Complementary pivoting with covering vector e = (1..1). Ties in the ratio
// test favour z0 leaving, then the largest pivot; after 3 l consecutive
// degenerate pivots the least-index rule takes over.
LcpSolution lemke(const LcpInstance& inst, int max_pivots = 1000);

// Explicit Euler forward simulation of the linear complementarity system
// on t_k = t0 + k h, k = 0..N, h = (t1 - t0)/N. u_k solves LCP(D, C x_k + q)
// at every node including the last.
DiscreteTrajectory simulate_lcs(const OcpecProblem& p, int N);
DiscreteTrajectory simulate_lcs(const OcpecProblem& p, int N, const Vec& x0);

}  // namespace ocpec
