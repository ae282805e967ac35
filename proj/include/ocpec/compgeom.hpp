#pragma once

#include "ocpec/types.hpp"

#include <vector>

namespace ocpec {

// Activity classification at one node. Index lists are 0-based.
struct IndexSets {
  std::vector<int> i_minus, i_zero;           // g inactive / active
  std::vector<int> i_plus0, i_00, i_0plus;    // complementarity pairs
  double tol_act = 1e-6;

  bool degenerate() const { return !i_00.empty(); }
};

IndexSets classify_indices(const Vec& g_val, const Vec& G_val, const Vec& H_val, double tol);

// Membership of (alpha, beta) in the limiting normal cone of C^l at (a, b).
bool in_limiting_normal_cone(const Vec& a, const Vec& b, const Vec& alpha, const Vec& beta,
                             double tol);

struct Projection {
  Vec a, b;
  double distance = 0.0;
};

Projection project_C(const Vec& a, const Vec& b);

struct SignClass {
  bool w = true, c = false, m = false, s = false;
};

SignClass sign_class(double mu, double nu, double tol);

// Ordered so that a larger value is a stronger claim.
enum class Stationarity { Failed = 0, W = 1, C = 2, M = 3, S = 4 };

const char* to_string(Stationarity s);
Stationarity parse_stationarity(const std::string& s);

// Strongest label satisfied by a single pair's class.
Stationarity strongest(const SignClass& cls);

}  // namespace ocpec
