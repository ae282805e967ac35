#include "ocpec/problem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ocpec {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Parse: return "parse_error";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::UnknownKind: return "unknown_kind";
    case ErrorCode::Infeasible: return "infeasible";
    case ErrorCode::LcpFailure: return "lcp_failure";
    case ErrorCode::Solver: return "solver_failure";
    case ErrorCode::Io: return "io_error";
    case ErrorCode::Internal: return "internal_error";
  }
  return "unknown";
}

const char* to_string(Endpoint::Kind kind) {
  switch (kind) {
    case Endpoint::Kind::FixedInitialFreeFinal: return "fixed_initial_free_final";
    case Endpoint::Kind::BoxInitialFreeFinal: return "box_initial_free_final";
    case Endpoint::Kind::FixedBoth: return "fixed_both";
  }
  return "unknown";
}

const char* to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::Counterexample: return "counterexample";
    case ProblemKind::LinearLcs: return "linear_lcs";
    case ProblemKind::Autonomized: return "autonomized";
  }
  return "unknown";
}

bool Endpoint::final_free() const {
  for (Eigen::Index i = 0; i < x1_lo.size(); ++i) {
    if (std::isfinite(x1_lo(i)) || std::isfinite(x1_hi(i))) return false;
  }
  return true;
}

Endpoint Endpoint::fixed_initial(const Vec& x0) {
  Endpoint e;
  e.kind = Kind::FixedInitialFreeFinal;
  e.x0_lo = x0;
  e.x0_hi = x0;
  e.x1_lo = Vec::Constant(x0.size(), -kInf);
  e.x1_hi = Vec::Constant(x0.size(), kInf);
  return e;
}

Endpoint Endpoint::box_initial(const Vec& lo, const Vec& hi) {
  Endpoint e;
  e.kind = Kind::BoxInitialFreeFinal;
  e.x0_lo = lo;
  e.x0_hi = hi;
  e.x1_lo = Vec::Constant(lo.size(), -kInf);
  e.x1_hi = Vec::Constant(lo.size(), kInf);
  return e;
}

Endpoint Endpoint::fixed_both(const Vec& x0, const Vec& x1) {
  Endpoint e;
  e.kind = Kind::FixedBoth;
  e.x0_lo = x0;
  e.x0_hi = x0;
  e.x1_lo = x1;
  e.x1_hi = x1;
  return e;
}

Vec OcpecProblem::initial_state() const {
  Vec x0(n);
  for (int i = 0; i < n; ++i) {
    x0(i) = std::clamp(0.0, endpoint.x0_lo(i), endpoint.x0_hi(i));
  }
  return x0;
}

namespace {

void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

void check_eval(const VectorEval& e, int rows, int n, int m, const char* what) {
  require(e.value.size() == rows && e.jac_x.rows() == rows && e.jac_x.cols() == n &&
              e.jac_u.rows() == rows && e.jac_u.cols() == m && e.jac_t.size() == rows,
          ErrorCode::DimensionMismatch, std::string("oracle '") + what + "' output dimensions");
}

VectorEval zero_eval(int rows, int n, int m) {
  return {Vec::Zero(rows), Mat::Zero(rows, n), Mat::Zero(rows, m), Vec::Zero(rows)};
}

}  // namespace

void OcpecProblem::validate() const {
  require(t0 < t1, ErrorCode::InvalidArgument, "t0 must be < t1");
  require(n >= 0 && m >= 0 && l >= 0 && l1 >= 0 && l2 >= 0, ErrorCode::InvalidArgument,
          "negative dimension");
  require(dynamics && running_cost && endpoint_cost && g && h && G && H,
          ErrorCode::InvalidArgument, "missing oracle");
  require(endpoint.x0_lo.size() == n && endpoint.x0_hi.size() == n &&
              endpoint.x1_lo.size() == n && endpoint.x1_hi.size() == n,
          ErrorCode::DimensionMismatch, "endpoint bounds");
  require((endpoint.x0_lo.array() <= endpoint.x0_hi.array()).all() &&
              (endpoint.x1_lo.array() <= endpoint.x1_hi.array()).all(),
          ErrorCode::InvalidArgument, "endpoint box with lo > hi");
  if (control_set.bounded) {
    require(control_set.lo.size() == m && control_set.hi.size() == m,
            ErrorCode::DimensionMismatch, "control box");
    require((control_set.lo.array() <= control_set.hi.array()).all(),
            ErrorCode::InvalidArgument, "control box with lo > hi");
  }
  require(radius > 0.0, ErrorCode::InvalidArgument, "radius must be positive");

  const Vec x = initial_state();
  const Vec u = Vec::Zero(m);
  check_eval(dynamics(t0, x, u), n, n, m, "dynamics");
  check_eval(g(t0, x, u), l1, n, m, "g");
  check_eval(h(t0, x, u), l2, n, m, "h");
  check_eval(G(t0, x, u), l, n, m, "G");
  check_eval(H(t0, x, u), l, n, m, "H");
  const ScalarEval F = running_cost(t0, x, u);
  require(F.grad_x.size() == n && F.grad_u.size() == m, ErrorCode::DimensionMismatch,
          "oracle 'running_cost' output dimensions");
  const EndpointEval f = endpoint_cost(x, x);
  require(f.grad_x0.size() == n && f.grad_x1.size() == n, ErrorCode::DimensionMismatch,
          "oracle 'endpoint_cost' output dimensions");
}

PsiEval evaluate_psi(const OcpecProblem& p, double t, const Vec& x, const Vec& u,
                     const Vec& lam_g, const Vec& lam_h, const Vec& lam_G, const Vec& lam_H) {
  const VectorEval eg = p.g(t, x, u), eh = p.h(t, x, u), eG = p.G(t, x, u), eH = p.H(t, x, u);
  PsiEval out;
  out.value = eg.value.dot(lam_g) + eh.value.dot(lam_h) - eG.value.dot(lam_G) - eH.value.dot(lam_H);
  out.grad_x = eg.jac_x.transpose() * lam_g + eh.jac_x.transpose() * lam_h -
               eG.jac_x.transpose() * lam_G - eH.jac_x.transpose() * lam_H;
  out.grad_u = eg.jac_u.transpose() * lam_g + eh.jac_u.transpose() * lam_h -
               eG.jac_u.transpose() * lam_G - eH.jac_u.transpose() * lam_H;
  return out;
}

OcpecProblem make_counterexample() {
  OcpecProblem p;
  p.name = "counterexample";
  p.kind = ProblemKind::Counterexample;
  p.t0 = 0.0;
  p.t1 = 1.0;
  p.n = p.m = p.l = 1;
  p.dynamics = [](double, const Vec&, const Vec& u) {
    VectorEval e = zero_eval(1, 1, 1);
    e.value(0) = u(0);
    e.jac_u(0, 0) = 1.0;
    return e;
  };
  p.running_cost = [](double, const Vec&, const Vec&) {
    return ScalarEval{0.0, Vec::Zero(1), Vec::Zero(1), 0.0};
  };
  p.endpoint_cost = [](const Vec&, const Vec& x1) {
    EndpointEval e;
    e.value = x1(0);
    e.grad_x0 = Vec::Zero(1);
    e.grad_x1 = Vec::Ones(1);
    return e;
  };
  p.g = [](double, const Vec&, const Vec&) { return zero_eval(0, 1, 1); };
  p.h = p.g;
  p.G = [](double, const Vec&, const Vec& u) {
    VectorEval e = zero_eval(1, 1, 1);
    e.value(0) = -u(0);
    e.jac_u(0, 0) = -1.0;
    return e;
  };
  p.H = [](double, const Vec& x, const Vec& u) {
    VectorEval e = zero_eval(1, 1, 1);
    e.value(0) = x(0) - u(0) * u(0);
    e.jac_x(0, 0) = 1.0;
    e.jac_u(0, 0) = -2.0 * u(0);
    return e;
  };
  p.endpoint = Endpoint::box_initial(Vec::Constant(1, -kInf), Vec::Zero(1));
  p.affine = false;
  p.autonomous = true;
  return p;
}

OcpecProblem make_linear_lcs(const LinearLcsData& d, double t0, double t1,
                             const Endpoint& endpoint, double radius) {
  const auto n = static_cast<int>(d.A.rows());
  const auto m = static_cast<int>(d.B.cols());
  auto shape = [](const Mat& M, Eigen::Index r, Eigen::Index c, const char* field) {
    if (M.rows() != r || M.cols() != c) {
      std::ostringstream os;
      os << "field '" << field << "': expected shape " << r << "x" << c << ", got " << M.rows()
         << "x" << M.cols();
      throw Error(ErrorCode::DimensionMismatch, os.str());
    }
  };
  auto length = [](const Vec& v, Eigen::Index r, const char* field) {
    if (v.size() != r) {
      std::ostringstream os;
      os << "field '" << field << "': expected length " << r << ", got " << v.size();
      throw Error(ErrorCode::DimensionMismatch, os.str());
    }
  };
  shape(d.A, n, n, "A");
  shape(d.B, n, m, "B");
  length(d.c, n, "c");
  shape(d.C, m, n, "C");
  shape(d.D, m, m, "D");
  length(d.q, m, "q");
  length(d.target, n, "T");

  OcpecProblem p;
  p.name = "linear_lcs";
  p.kind = ProblemKind::LinearLcs;
  p.t0 = t0;
  p.t1 = t1;
  p.n = n;
  p.m = m;
  p.l = m;
  p.linear = d;
  p.dynamics = [d](double, const Vec& x, const Vec& u) {
    VectorEval e;
    e.value = d.A * x + d.B * u + d.c;
    e.jac_x = d.A;
    e.jac_u = d.B;
    e.jac_t = Vec::Zero(d.A.rows());
    return e;
  };
  p.running_cost = [n, m](double, const Vec&, const Vec&) {
    return ScalarEval{0.0, Vec::Zero(n), Vec::Zero(m), 0.0};
  };
  p.endpoint_cost = [d](const Vec&, const Vec& x1) {
    EndpointEval e;
    const Vec r = x1 - d.target;
    e.value = 0.5 * r.squaredNorm();
    e.grad_x0 = Vec::Zero(r.size());
    e.grad_x1 = r;
    return e;
  };
  p.g = [n, m](double, const Vec&, const Vec&) { return zero_eval(0, n, m); };
  p.h = p.g;
  p.G = [n, m](double, const Vec&, const Vec& u) {
    VectorEval e = zero_eval(m, n, m);
    e.value = u;
    e.jac_u = Mat::Identity(m, m);
    return e;
  };
  p.H = [d](double, const Vec& x, const Vec& u) {
    VectorEval e;
    e.value = d.C * x + d.D * u + d.q;
    e.jac_x = d.C;
    e.jac_u = d.D;
    e.jac_t = Vec::Zero(d.q.size());
    return e;
  };
  p.endpoint = endpoint;
  p.radius = radius;
  p.affine = true;
  p.autonomous = true;
  p.validate();
  return p;
}

OcpecProblem builtin(const std::string& name) {
  if (name == "counterexample") return make_counterexample();
  if (name == "linear_lcs") {
    LinearLcsData d;
    d.A = Mat::Zero(1, 1);
    d.B = Mat::Ones(1, 1);
    d.c = Vec::Constant(1, -1.0);
    d.C = Mat::Ones(1, 1);
    d.D = Mat::Ones(1, 1);
    d.q = Vec::Zero(1);
    d.target = Vec::Zero(1);
    return make_linear_lcs(d, 0.0, 1.0, Endpoint::fixed_initial(Vec::Ones(1)));
  }
  throw Error(ErrorCode::UnknownKind, "unknown builtin problem '" + name + "'");
}

namespace {

VectorOracle lift(VectorOracle f, int n) {
  return [f = std::move(f), n](double, const Vec& xs, const Vec& u) {
    const double sigma = xs(n);
    const VectorEval e = f(sigma, xs.head(n), u);
    VectorEval out;
    out.value = e.value;
    out.jac_x.resize(e.value.size(), n + 1);
    out.jac_x.leftCols(n) = e.jac_x;
    out.jac_x.col(n) = e.jac_t;
    out.jac_u = e.jac_u;
    out.jac_t = Vec::Zero(e.value.size());
    return out;
  };
}

}  // namespace

OcpecProblem autonomize(const OcpecProblem& p) {
  OcpecProblem a = p;
  const int n = p.n;
  const int m = p.m;
  a.name = "autonomize(" + p.name + ")";
  a.kind = ProblemKind::Autonomized;
  a.n = n + 1;
  auto phi = p.dynamics;
  a.dynamics = [phi, n, m](double, const Vec& xs, const Vec& u) {
    const VectorEval e = phi(xs(n), xs.head(n), u);
    VectorEval out;
    out.value.resize(n + 1);
    out.value.head(n) = e.value;
    out.value(n) = 1.0;
    out.jac_x = Mat::Zero(n + 1, n + 1);
    out.jac_x.topLeftCorner(n, n) = e.jac_x;
    out.jac_x.block(0, n, n, 1) = e.jac_t;
    out.jac_u = Mat::Zero(n + 1, m);
    out.jac_u.topRows(n) = e.jac_u;
    out.jac_t = Vec::Zero(n + 1);
    return out;
  };
  auto F = p.running_cost;
  a.running_cost = [F, n](double, const Vec& xs, const Vec& u) {
    const ScalarEval e = F(xs(n), xs.head(n), u);
    ScalarEval out;
    out.value = e.value;
    out.grad_x.resize(n + 1);
    out.grad_x.head(n) = e.grad_x;
    out.grad_x(n) = e.grad_t;
    out.grad_u = e.grad_u;
    return out;
  };
  auto f = p.endpoint_cost;
  a.endpoint_cost = [f, n](const Vec& x0, const Vec& x1) {
    const EndpointEval e = f(x0.head(n), x1.head(n));
    EndpointEval out;
    out.value = e.value;
    out.grad_x0 = Vec::Zero(n + 1);
    out.grad_x0.head(n) = e.grad_x0;
    out.grad_x1 = Vec::Zero(n + 1);
    out.grad_x1.head(n) = e.grad_x1;
    return out;
  };
  a.g = lift(p.g, n);
  a.h = lift(p.h, n);
  a.G = lift(p.G, n);
  a.H = lift(p.H, n);

  auto extend = [](const Vec& v, double extra) {
    Vec out(v.size() + 1);
    out.head(v.size()) = v;
    out(v.size()) = extra;
    return out;
  };
  a.endpoint.x0_lo = extend(p.endpoint.x0_lo, p.t0);
  a.endpoint.x0_hi = extend(p.endpoint.x0_hi, p.t0);
  const bool final_free = p.endpoint.final_free();
  a.endpoint.x1_lo = extend(p.endpoint.x1_lo, final_free ? -kInf : p.t1);
  a.endpoint.x1_hi = extend(p.endpoint.x1_hi, final_free ? kInf : p.t1);

  // sigma enters the constraints only through explicit t-dependence.
  a.affine = p.affine && p.autonomous;
  a.autonomous = true;
  if (p.linear) {
    LinearLcsData d = *p.linear;
    const Eigen::Index k = d.C.rows();
    LinearLcsData e;
    e.A = Mat::Zero(n + 1, n + 1);
    e.A.topLeftCorner(n, n) = d.A;
    e.B = Mat::Zero(n + 1, m);
    e.B.topRows(n) = d.B;
    e.c = extend(d.c, 1.0);
    e.C = Mat::Zero(k, n + 1);
    e.C.leftCols(n) = d.C;
    e.D = d.D;
    e.q = d.q;
    e.target = extend(d.target, 0.0);
    a.linear = e;
  }
  a.validate();
  return a;
}

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

DerivativeAudit audit_derivatives(const OcpecProblem& p, int points, std::mt19937_64& rng,
                                  double spread) {
  std::normal_distribution<double> nd(0.0, spread);
  std::uniform_real_distribution<double> ud(p.t0, p.t1);
  DerivativeAudit audit;
  audit.points = points;
  auto note = [&](double err, const char* what) {
    if (err > audit.max_rel_error) {
      audit.max_rel_error = err;
      audit.worst_oracle = what;
    }
  };
  auto check_vector = [&](const VectorOracle& f, const char* what, double t, const Vec& x,
                          const Vec& u) {
    const VectorEval e = f(t, x, u);
    for (int j = 0; j < x.size(); ++j) {
      const double step = 1e-6 * (1.0 + std::abs(x(j)));
      Vec xp = x, xm = x;
      xp(j) += step;
      xm(j) -= step;
      const Vec fd = (f(t, xp, u).value - f(t, xm, u).value) / (2.0 * step);
      for (Eigen::Index i = 0; i < fd.size(); ++i) note(rel_err(fd(i), e.jac_x(i, j)), what);
    }
    for (int j = 0; j < u.size(); ++j) {
      const double step = 1e-6 * (1.0 + std::abs(u(j)));
      Vec up = u, um = u;
      up(j) += step;
      um(j) -= step;
      const Vec fd = (f(t, x, up).value - f(t, x, um).value) / (2.0 * step);
      for (Eigen::Index i = 0; i < fd.size(); ++i) note(rel_err(fd(i), e.jac_u(i, j)), what);
    }
    const double step = 1e-6 * (1.0 + std::abs(t));
    const Vec fd = (f(t + step, x, u).value - f(t - step, x, u).value) / (2.0 * step);
    for (Eigen::Index i = 0; i < fd.size(); ++i) note(rel_err(fd(i), e.jac_t(i)), what);
  };

  for (int k = 0; k < points; ++k) {
    const double t = ud(rng);
    Vec x(p.n), u(p.m), x1(p.n);
    for (int i = 0; i < p.n; ++i) x(i) = nd(rng);
    for (int i = 0; i < p.m; ++i) u(i) = nd(rng);
    for (int i = 0; i < p.n; ++i) x1(i) = nd(rng);
    check_vector(p.dynamics, "dynamics", t, x, u);
    check_vector(p.g, "g", t, x, u);
    check_vector(p.h, "h", t, x, u);
    check_vector(p.G, "G", t, x, u);
    check_vector(p.H, "H", t, x, u);

    const VectorOracle F = [&p](double tt, const Vec& xx, const Vec& uu) {
      const ScalarEval s = p.running_cost(tt, xx, uu);
      return VectorEval{Vec::Constant(1, s.value), s.grad_x.transpose(), s.grad_u.transpose(),
                        Vec::Constant(1, s.grad_t)};
    };
    check_vector(F, "running_cost", t, x, u);

    const EndpointEval e = p.endpoint_cost(x, x1);
    for (int j = 0; j < p.n; ++j) {
      const double s0 = 1e-6 * (1.0 + std::abs(x(j)));
      Vec xp = x, xm = x;
      xp(j) += s0;
      xm(j) -= s0;
      note(rel_err((p.endpoint_cost(xp, x1).value - p.endpoint_cost(xm, x1).value) / (2 * s0),
                   e.grad_x0(j)),
           "endpoint_cost");
      const double s1 = 1e-6 * (1.0 + std::abs(x1(j)));
      Vec yp = x1, ym = x1;
      yp(j) += s1;
      ym(j) -= s1;
      note(rel_err((p.endpoint_cost(x, yp).value - p.endpoint_cost(x, ym).value) / (2 * s1),
                   e.grad_x1(j)),
           "endpoint_cost");
    }
  }
  return audit;
}

}  // namespace ocpec
