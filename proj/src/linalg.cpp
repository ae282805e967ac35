#include "ocpec/detail/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace ocpec::detail {

Vec min_norm_solve(const Mat& A, const Vec& b) {
  if (A.cols() == 0) return Vec::Zero(0);
  if (A.rows() == 0) return Vec::Zero(A.cols());
  return pseudo_inverse(A) * b;
}

Mat pseudo_inverse(const Mat& A, double rcond) {
  if (A.rows() == 0 || A.cols() == 0) return Mat::Zero(A.cols(), A.rows());
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  const double cutoff = rcond * std::max<double>(1.0, s.size() ? s(0) : 0.0);
  Mat inv = Mat::Zero(A.cols(), A.rows());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) {
      inv += svd.matrixV().col(i) * (1.0 / s(i)) * svd.matrixU().col(i).transpose();
    }
  }
  return inv;
}

Mat null_space(const Mat& A, double rcond) {
  const Eigen::Index n = A.cols();
  if (n == 0) return Mat::Zero(0, 0);
  if (A.rows() == 0) return Mat::Identity(n, n);
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  const double cutoff = rcond * std::max<double>(1.0, s.size() ? s(0) : 0.0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) ++rank;
  }
  return svd.matrixV().rightCols(n - rank);
}

double min_singular_value(const Mat& A) {
  if (A.rows() == 0 || A.cols() == 0) return kInf;
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues().minCoeff();
}

Vec nnls(const Mat& A, const Vec& b, int max_iter) {
  const Eigen::Index n = A.cols();
  Vec x = Vec::Zero(n);
  if (n == 0) return x;
  std::vector<bool> passive(n, false);
  const double tol = 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()) *
                     std::max(1.0, b.cwiseAbs().maxCoeff());

  auto solve_passive = [&](Vec& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j) if (passive[j]) idx.push_back(j);
    Mat Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (size_t k = 0; k < idx.size(); ++k) Ap.col(k) = A.col(idx[k]);
    const Vec zp = min_norm_solve(Ap, b);
    z = Vec::Zero(n);
    for (size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(k);
  };

  for (int outer = 0; outer < max_iter; ++outer) {
    const Vec w = A.transpose() * (b - A * x);
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    passive[best] = true;

    for (int inner = 0; inner < max_iter; ++inner) {
      Vec z;
      solve_passive(z);
      bool all_positive = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && z(j) <= 0.0) all_positive = false;
      }
      if (all_positive) {
        x = z;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && z(j) <= 0.0) {
          const double denom = x(j) - z(j);
          if (denom > 0.0) alpha = std::min(alpha, x(j) / denom);
        }
      }
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && x(j) <= tol) {
          passive[j] = false;
          x(j) = 0.0;
        }
      }
    }
  }
  return x;
}

namespace {

Mat select_columns(const Mat& A, const std::vector<Eigen::Index>& idx) {
  Mat out(A.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t k = 0; k < idx.size(); ++k) out.col(k) = A.col(idx[k]);
  return out;
}

}  // namespace

SignedLsqResult signed_least_squares(const Mat& A, const Vec& b,
                                     const std::vector<VarSign>& signs) {
  const Eigen::Index n = A.cols();
  SignedLsqResult res;
  res.v = Vec::Zero(n);
  res.used.assign(n, false);

  // Flip nonpositive columns so that every signed variable is nonnegative.
  Mat As = A;
  std::vector<Eigen::Index> free_idx, signed_idx;
  for (Eigen::Index j = 0; j < n; ++j) {
    switch (signs[j]) {
      case VarSign::Free: free_idx.push_back(j); break;
      case VarSign::NonNegative: signed_idx.push_back(j); break;
      case VarSign::NonPositive: As.col(j) = -A.col(j); signed_idx.push_back(j); break;
      case VarSign::Zero: break;
    }
  }
  const Mat AF = select_columns(As, free_idx);
  const Mat AS = select_columns(As, signed_idx);

  // Project out range(A_F), solve the signed part, back-substitute.
  Mat proj = Mat::Identity(A.rows(), A.rows());
  if (AF.cols() > 0 && A.rows() > 0) proj -= AF * pseudo_inverse(AF);
  Vec vs = Vec::Zero(AS.cols());
  if (AS.cols() > 0) vs = nnls(proj * AS, proj * b);
  const Vec vf = min_norm_solve(AF, b - AS * vs);

  Vec flipped = Vec::Zero(n);
  for (size_t k = 0; k < free_idx.size(); ++k) flipped(free_idx[k]) = vf(k);
  for (size_t k = 0; k < signed_idx.size(); ++k) flipped(signed_idx[k]) = vs(k);

  std::vector<Eigen::Index> used_idx = free_idx;
  for (size_t k = 0; k < signed_idx.size(); ++k) {
    if (vs(k) > 0.0) used_idx.push_back(signed_idx[k]);
  }
  std::sort(used_idx.begin(), used_idx.end());

  // Minimum-norm refinement over the used columns.
  const Mat AU = select_columns(As, used_idx);
  const Vec vu = min_norm_solve(AU, b);
  const double r_active = (As * flipped - b).norm();
  const double r_refined = (AU * vu - b).norm();
  bool keeps_sign = true;
  for (size_t k = 0; k < used_idx.size(); ++k) {
    const auto j = used_idx[k];
    if (signs[j] != VarSign::Free && vu(k) < -1e-13 * std::max(1.0, vu.cwiseAbs().maxCoeff())) {
      keeps_sign = false;
    }
  }
  if (keeps_sign && r_refined <= r_active + 1e-12 * std::max(1.0, b.norm())) {
    flipped.setZero();
    for (size_t k = 0; k < used_idx.size(); ++k) {
      const auto j = used_idx[k];
      flipped(j) = signs[j] == VarSign::Free ? vu(k) : std::max(0.0, vu(k));
    }
  }

  // The fitted vector is unique; when the minimum-norm preimage over every
  // admissible column already keeps the signs it is the minimum-norm minimizer.
  std::vector<Eigen::Index> all_idx = free_idx;
  all_idx.insert(all_idx.end(), signed_idx.begin(), signed_idx.end());
  std::sort(all_idx.begin(), all_idx.end());
  if (all_idx.size() > used_idx.size()) {
    const Vec fit = As * flipped;
    const Vec va = min_norm_solve(select_columns(As, all_idx), fit);
    bool ok = true;
    for (size_t k = 0; k < all_idx.size(); ++k) {
      if (signs[all_idx[k]] != VarSign::Free && va(k) < -1e-13 * std::max(1.0, va.cwiseAbs().maxCoeff())) ok = false;
    }
    Vec cand = Vec::Zero(n);
    for (size_t k = 0; k < all_idx.size(); ++k) {
      const auto j = all_idx[k];
      cand(j) = signs[j] == VarSign::Free ? va(k) : std::max(0.0, va(k));
    }
    if (ok && (As * cand - b).norm() <= (As * flipped - b).norm() + 1e-12 * std::max(1.0, b.norm())) {
      flipped = cand;
      used_idx.clear();
      for (size_t k = 0; k < all_idx.size(); ++k) {
        if (signs[all_idx[k]] == VarSign::Free || cand(all_idx[k]) > 0.0) used_idx.push_back(all_idx[k]);
      }
    }
  }

  for (Eigen::Index j = 0; j < n; ++j) {
    res.v(j) = signs[j] == VarSign::NonPositive ? -flipped(j) : flipped(j);
  }
  for (auto j : used_idx) res.used[j] = true;
  res.residual = (A * res.v - b).norm();
  return res;
}

std::optional<Vec> lp_feasible_point(const Mat& A_in, const Vec& b_in) {
  const Eigen::Index m = A_in.rows();
  const Eigen::Index n = A_in.cols();
  Mat A = A_in;
  Vec b = b_in;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (b(i) < 0) {
      A.row(i) *= -1.0;
      b(i) = -b(i);
    }
  }
  // Tableau: [A | I | b], objective = sum of artificials.
  const Eigen::Index cols = n + m + 1;
  Mat T = Mat::Zero(m + 1, cols);
  T.block(0, 0, m, n) = A;
  T.block(0, n, m, m) = Mat::Identity(m, m);
  T.block(0, cols - 1, m, 1) = b;
  std::vector<Eigen::Index> basis(m);
  for (Eigen::Index i = 0; i < m; ++i) basis[i] = n + i;
  // Reduced costs of phase-1 objective (minimize sum of artificials).
  for (Eigen::Index j = 0; j < cols; ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) s += T(i, j);
    T(m, j) = (j >= n && j < n + m) ? 0.0 : -s;
  }
  const double eps = 1e-11;
  for (int iter = 0; iter < 1000; ++iter) {
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < n + m; ++j) {
      if (T(m, j) < -eps) {
        enter = j;
        break;
      }
    }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best = kInf;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (T(i, enter) > eps) {
        const double ratio = T(i, cols - 1) / T(i, enter);
        if (ratio < best - eps || (std::abs(ratio - best) <= eps && leave >= 0 && basis[i] < basis[leave])) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) break;
    T.row(leave) /= T(leave, enter);
    for (Eigen::Index i = 0; i <= m; ++i) {
      if (i != leave && T(i, enter) != 0.0) T.row(i) -= T(i, enter) * T.row(leave);
    }
    basis[leave] = enter;
  }
  if (-T(m, cols - 1) > 1e-9 * std::max(1.0, b.cwiseAbs().maxCoeff())) return std::nullopt;
  Vec y = Vec::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (basis[i] < n) y(basis[i]) = std::max(0.0, T(i, cols - 1));
  }
  if ((A_in * y - b_in).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, b_in.cwiseAbs().maxCoeff())) {
    return std::nullopt;
  }
  return y;
}

std::optional<Vec> find_cone_ray(const Mat& A, const std::vector<VarSign>& signs, double tol) {
  const Eigen::Index n = A.cols();
  std::vector<Eigen::Index> free_idx, signed_idx;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (signs[j] == VarSign::Free) free_idx.push_back(j);
    else if (signs[j] != VarSign::Zero) signed_idx.push_back(j);
  }
  auto normalize = [&](Vec v) -> Vec {
    const double scale = v.cwiseAbs().maxCoeff();
    v /= scale;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::abs(v(j)) > tol) {
        if (v(j) < 0 && signs[j] == VarSign::Free) {
          bool flippable = true;
          for (auto s : signed_idx) if (std::abs(v(s)) > 0.0) flippable = false;
          if (flippable) v = -v;
        }
        break;
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) if (std::abs(v(j)) < 1e-15) v(j) = 0.0;
    return v;
  };

  // Lineality part: kernel of the free columns alone.
  if (!free_idx.empty()) {
    const Mat AF = select_columns(A, free_idx);
    const Mat K = null_space(AF, tol);
    if (K.cols() > 0) {
      Vec v = Vec::Zero(n);
      for (size_t k = 0; k < free_idx.size(); ++k) v(free_idx[k]) = K(k, 0);
      return normalize(v);
    }
  }
  if (signed_idx.empty()) return std::nullopt;

  // Otherwise some signed variable must be positive: A_S s + A_F (f+ - f-) = 0,
  // sum(s) = 1, all >= 0.
  const Eigen::Index ns = static_cast<Eigen::Index>(signed_idx.size());
  const Eigen::Index nf = static_cast<Eigen::Index>(free_idx.size());
  Mat lp = Mat::Zero(A.rows() + 1, ns + 2 * nf);
  for (Eigen::Index k = 0; k < ns; ++k) {
    const auto j = signed_idx[k];
    const double sgn = signs[j] == VarSign::NonPositive ? -1.0 : 1.0;
    lp.block(0, k, A.rows(), 1) = sgn * A.col(j);
    lp(A.rows(), k) = 1.0;
  }
  for (Eigen::Index k = 0; k < nf; ++k) {
    lp.block(0, ns + k, A.rows(), 1) = A.col(free_idx[k]);
    lp.block(0, ns + nf + k, A.rows(), 1) = -A.col(free_idx[k]);
  }
  Vec rhs = Vec::Zero(A.rows() + 1);
  rhs(A.rows()) = 1.0;
  const auto y = lp_feasible_point(lp, rhs);
  if (!y) return std::nullopt;
  Vec v = Vec::Zero(n);
  for (Eigen::Index k = 0; k < ns; ++k) {
    const auto j = signed_idx[k];
    v(j) = (signs[j] == VarSign::NonPositive ? -1.0 : 1.0) * (*y)(k);
  }
  for (Eigen::Index k = 0; k < nf; ++k) v(free_idx[k]) = (*y)(ns + k) - (*y)(ns + nf + k);
  if ((A * v).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, A.cwiseAbs().maxCoeff())) return std::nullopt;
  return normalize(v);
}

}  // namespace ocpec::detail
