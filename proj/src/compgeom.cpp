#include "ocpec/compgeom.hpp"

#include <cmath>
#include <sstream>

namespace ocpec {

IndexSets classify_indices(const Vec& g_val, const Vec& G_val, const Vec& H_val, double tol) {
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "activity tolerance must be positive");
  if (G_val.size() != H_val.size()) {
    throw Error(ErrorCode::DimensionMismatch, "G and H values differ in length");
  }
  IndexSets s;
  s.tol_act = tol;
  for (Eigen::Index i = 0; i < g_val.size(); ++i) {
    if (!std::isfinite(g_val(i))) throw Error(ErrorCode::InvalidArgument, "non-finite g value");
    (g_val(i) >= -tol ? s.i_zero : s.i_minus).push_back(static_cast<int>(i));
  }
  for (Eigen::Index i = 0; i < G_val.size(); ++i) {
    const double a = G_val(i), b = H_val(i);
    if (!std::isfinite(a) || !std::isfinite(b)) {
      throw Error(ErrorCode::InvalidArgument, "non-finite complementarity value");
    }
    const bool a_zero = std::abs(a) <= tol, b_zero = std::abs(b) <= tol;
    if (a < -tol || b < -tol || (!a_zero && !b_zero)) {
      std::ostringstream os;
      os << "pair " << i << " (G=" << a << ", H=" << b << ") is not in C^l within " << tol;
      throw Error(ErrorCode::Infeasible, os.str());
    }
    if (a_zero && b_zero) {
      s.i_00.push_back(static_cast<int>(i));
    } else if (b_zero) {
      s.i_plus0.push_back(static_cast<int>(i));
    } else {
      s.i_0plus.push_back(static_cast<int>(i));
    }
  }
  return s;
}

bool in_limiting_normal_cone(const Vec& a, const Vec& b, const Vec& alpha, const Vec& beta,
                             double tol) {
  const Eigen::Index l = a.size();
  if (b.size() != l || alpha.size() != l || beta.size() != l) {
    throw Error(ErrorCode::DimensionMismatch, "normal-cone arguments differ in length");
  }
  for (Eigen::Index i = 0; i < l; ++i) {
    if (a(i) < -tol || b(i) < -tol || (a(i) > tol && b(i) > tol)) {
      throw Error(ErrorCode::InvalidArgument, "base point is not in C^l");
    }
  }
  for (Eigen::Index i = 0; i < l; ++i) {
    if (a(i) > tol) {
      if (std::abs(alpha(i)) > tol) return false;
    } else if (b(i) > tol) {
      if (std::abs(beta(i)) > tol) return false;
    } else {
      const bool both_negative = alpha(i) < -tol && beta(i) < -tol;
      const bool product_zero = std::abs(alpha(i) * beta(i)) <= tol * tol;
      if (!both_negative && !product_zero) return false;
    }
  }
  return true;
}

Projection project_C(const Vec& a, const Vec& b) {
  Projection out;
  out.a = Vec::Zero(a.size());
  out.b = Vec::Zero(b.size());
  double sq = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double pa = std::max(a(i), 0.0), pb = std::max(b(i), 0.0);
    // Distances to the three candidate points of C^1.
    const double d1 = (a(i) - pa) * (a(i) - pa) + b(i) * b(i);
    const double d2 = a(i) * a(i) + (b(i) - pb) * (b(i) - pb);
    const double d3 = a(i) * a(i) + b(i) * b(i);
    if (d1 <= d2 && d1 <= d3) {
      out.a(i) = pa;
      sq += d1;
    } else if (d2 <= d3) {
      out.b(i) = pb;
      sq += d2;
    } else {
      sq += d3;
    }
  }
  out.distance = std::sqrt(sq);
  return out;
}

SignClass sign_class(double mu, double nu, double tol) {
  SignClass c;
  const double prod = mu * nu;
  c.w = true;
  c.c = prod >= -tol * tol;
  c.m = (mu > tol && nu > tol) || std::abs(prod) <= tol * tol;
  c.s = mu >= -tol && nu >= -tol;
  // The raw tests disagree in a band of width tol around the axes, e.g.
  // (tol/2, 1) passes s but neither product test. Close upward so the
  // lattice holds everywhere.
  c.m = c.m || c.s;
  c.c = c.c || c.m;
  return c;
}

Stationarity strongest(const SignClass& cls) {
  if (cls.s) return Stationarity::S;
  if (cls.m) return Stationarity::M;
  if (cls.c) return Stationarity::C;
  return Stationarity::W;
}

const char* to_string(Stationarity s) {
  switch (s) {
    case Stationarity::Failed: return "failed";
    case Stationarity::W: return "W";
    case Stationarity::C: return "C";
    case Stationarity::M: return "M";
    case Stationarity::S: return "S";
  }
  return "failed";
}

Stationarity parse_stationarity(const std::string& s) {
  if (s == "W") return Stationarity::W;
  if (s == "C") return Stationarity::C;
  if (s == "M") return Stationarity::M;
  if (s == "S") return Stationarity::S;
  return Stationarity::Failed;
}

}  // namespace ocpec
