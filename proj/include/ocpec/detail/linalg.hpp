#pragma once

#include "ocpec/types.hpp"

#include <optional>
#include <vector>

// Small dense kernels shared by the multiplier-recovery and CQ code. All
// problems handled here have at most a few dozen unknowns.
namespace ocpec::detail {

// Minimum-norm least-squares solution of A v = b.
Vec min_norm_solve(const Mat& A, const Vec& b);

// Moore-Penrose pseudo-inverse with relative singular-value cutoff.
Mat pseudo_inverse(const Mat& A, double rcond = 1e-12);

// Orthonormal basis (columns) of ker(A).
Mat null_space(const Mat& A, double rcond = 1e-10);

// Smallest singular value of A counted over min(rows, cols) values; +inf for
// an empty matrix.
double min_singular_value(const Mat& A);

enum class VarSign { Free, NonNegative, NonPositive, Zero };

struct SignedLsqResult {
  Vec v;
  double residual = 0.0;    // ||A v - b||
  std::vector<bool> used;   // free columns plus strictly nonzero signed ones
};

// min ||A v - b|| subject to per-column sign restrictions. Among minimizers
// the minimum-norm preimage of the fit over all admissible columns is
// returned when it keeps the signs, then the same over the columns used by
// the active set, otherwise the active-set solution itself.
SignedLsqResult signed_least_squares(const Mat& A, const Vec& b,
                                     const std::vector<VarSign>& signs);

// Lawson-Hanson nonnegative least squares.
Vec nnls(const Mat& A, const Vec& b, int max_iter = 500);

// Finds y >= 0 with A y = b by phase-1 simplex (Bland's rule).
std::optional<Vec> lp_feasible_point(const Mat& A, const Vec& b);

// Nonzero v with A v = 0 and sign restrictions, normalized to ||v||_inf = 1
// with the first nonzero entry positive where the sign pattern allows.
std::optional<Vec> find_cone_ray(const Mat& A, const std::vector<VarSign>& signs,
                                 double tol = 1e-9);

}  // namespace ocpec::detail
