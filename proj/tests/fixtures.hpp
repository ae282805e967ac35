#pragma once

// Hand-built problems for the multiplier and constraint-qualification tests.

#include "ocpec/problem.hpp"
#include "ocpec/types.hpp"

#include <memory>
#include <random>

namespace fixture {

using ocpec::Mat;
using ocpec::Vec;

// v = Jx x + Ju u + c
struct Affine {
  Mat Jx, Ju;
  Vec c;

  static Affine zero(int rows, int n, int m) {
    return {Mat::Zero(rows, n), Mat::Zero(rows, m), Vec::Zero(rows)};
  }
  ocpec::VectorOracle oracle() const {
    return [a = *this](double, const Vec& x, const Vec& u) {
      ocpec::VectorEval e;
      e.value = a.Jx * x + a.Ju * u + a.c;
      e.jac_x = a.Jx;
      e.jac_u = a.Ju;
      e.jac_t = Vec::Zero(a.c.size());
      return e;
    };
  }
};

struct AffineData {
  int n = 1, m = 1;
  Affine phi, g, h, G, H;
  Vec running_u;  // linear running cost r'u (empty: zero)
  Vec terminal;   // linear endpoint cost c'x1 (empty: zero)
};

inline ocpec::OcpecProblem make_affine(const AffineData& s) {
  ocpec::OcpecProblem p;
  p.name = "affine_fixture";
  p.t0 = 0.0;
  p.t1 = 1.0;
  p.n = s.n;
  p.m = s.m;
  p.l = static_cast<int>(s.G.c.size());
  p.l1 = static_cast<int>(s.g.c.size());
  p.l2 = static_cast<int>(s.h.c.size());
  p.dynamics = s.phi.oracle();
  p.g = s.g.oracle();
  p.h = s.h.oracle();
  p.G = s.G.oracle();
  p.H = s.H.oracle();
  const Vec r = s.running_u.size() ? s.running_u : Vec::Zero(s.m);
  const int n = s.n;
  p.running_cost = [r, n](double, const Vec&, const Vec& u) {
    return ocpec::ScalarEval{r.dot(u), Vec::Zero(n), r, 0.0};
  };
  const Vec c = s.terminal.size() ? s.terminal : Vec::Zero(s.n);
  p.endpoint_cost = [c, n](const Vec&, const Vec& x1) {
    return ocpec::EndpointEval{c.dot(x1), Vec::Zero(n), c};
  };
  p.endpoint = ocpec::Endpoint::fixed_initial(Vec::Zero(s.n));
  p.affine = true;
  p.validate();
  return p;
}

// Constant trajectory at (x, u) on N intervals of [0, 1].
inline ocpec::DiscreteTrajectory constant_trajectory(const Vec& x, const Vec& u, int N) {
  ocpec::DiscreteTrajectory tr;
  tr.t = Vec::LinSpaced(N + 1, 0.0, 1.0);
  tr.x = x.replicate(1, N + 1);
  tr.u = u.replicate(1, N + 1);
  return tr;
}

inline Mat gaussian(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Mat M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = nd(rng);
  return M;
}

}  // namespace fixture
