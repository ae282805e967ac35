#include "ocpec.h"

#include "ocpec/lcp.hpp"
#include "ocpec/report.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <string>

struct ocpec_problem {
  std::shared_ptr<ocpec::OcpecProblem> p;
};

struct ocpec_trajectory {
  ocpec::DiscreteTrajectory traj;
  std::optional<ocpec::SolveInfo> solve;
};

struct ocpec_analysis {
  ocpec::Analysis a;
  std::string json;
};

namespace {

thread_local std::string g_last_error;

ocpec_status map_code(ocpec::ErrorCode c) {
  switch (c) {
    case ocpec::ErrorCode::InvalidArgument: return OCPEC_ERR_INVALID_ARGUMENT;
    case ocpec::ErrorCode::Parse: return OCPEC_ERR_PARSE;
    case ocpec::ErrorCode::DimensionMismatch: return OCPEC_ERR_DIMENSION;
    case ocpec::ErrorCode::UnknownKind: return OCPEC_ERR_UNKNOWN_KIND;
    case ocpec::ErrorCode::Infeasible: return OCPEC_ERR_INFEASIBLE;
    case ocpec::ErrorCode::LcpFailure: return OCPEC_ERR_LCP;
    case ocpec::ErrorCode::Solver: return OCPEC_ERR_SOLVER;
    case ocpec::ErrorCode::Io: return OCPEC_ERR_IO;
    case ocpec::ErrorCode::Internal: return OCPEC_ERR_INTERNAL;
  }
  return OCPEC_ERR_INTERNAL;
}

ocpec_status fail(ocpec_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <class F>
ocpec_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const ocpec::Error& e) {
    return fail(map_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(OCPEC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(OCPEC_ERR_INTERNAL, e.what());
  }
}

ocpec::HomotopySchedule schedule(const ocpec_options& o) {
  ocpec::HomotopySchedule s;
  s.tau0 = o.tau0;
  s.tau_min = o.tau_min;
  s.factor = o.tau_factor;
  s.polish = o.polish != 0;
  return s;
}

ocpec_status check_options(const ocpec_options& o) {
  const double pos[] = {o.tau0, o.tau_min, o.tol_act, o.tol_recover, o.tol_sign, o.tol_div, o.feasibility_tol};
  for (double v : pos) {
    if (!(v > 0.0) || !std::isfinite(v)) return fail(OCPEC_ERR_INVALID_ARGUMENT, "tolerances must be positive and finite");
  }
  if (!(o.tau_factor > 0.0 && o.tau_factor < 1.0)) return fail(OCPEC_ERR_INVALID_ARGUMENT, "tau_factor must lie in (0, 1)");
  if (o.tau_min > o.tau0) return fail(OCPEC_ERR_INVALID_ARGUMENT, "tau_min must not exceed tau0");
  if (!(o.eps_meas >= 0.0 && o.eps_meas < 1.0)) return fail(OCPEC_ERR_INVALID_ARGUMENT, "eps_meas must lie in [0, 1)");
  if (o.samples < 0) return fail(OCPEC_ERR_INVALID_ARGUMENT, "samples must be nonnegative");
  return OCPEC_OK;
}

ocpec::AnalysisOptions analysis_options(const ocpec_options& o) {
  ocpec::AnalysisOptions a;
  a.recovery.tol_act = o.tol_act;
  a.recovery.tol_recover = o.tol_recover;
  a.recovery.tol_sign = o.tol_sign;
  a.recovery.tol_div = o.tol_div;
  a.recovery.eps_meas = o.eps_meas;
  a.cq.tol_act = o.tol_act;
  a.samples = o.samples;
  a.seed = o.seed;
  a.run_weierstrass = o.run_weierstrass != 0;
  a.run_cq = o.run_cq != 0;
  a.feasibility_tol = o.feasibility_tol;
  return a;
}

ocpec_status write_file(const char* path, const std::string& text) {
  if (!path) return fail(OCPEC_ERR_INVALID_ARGUMENT, "null path");
  std::ofstream f(path, std::ios::binary);
  if (!f) return fail(OCPEC_ERR_IO, std::string("cannot open '") + path + "' for writing");
  f << text;
  if (!f) return fail(OCPEC_ERR_IO, std::string("write to '") + path + "' failed");
  return OCPEC_OK;
}

ocpec_status adopt(ocpec::OcpecProblem&& p, ocpec_problem** out) {
  p.validate();
  auto* h = new ocpec_problem;
  h->p = std::make_shared<ocpec::OcpecProblem>(std::move(p));
  *out = h;
  return OCPEC_OK;
}

#define OCPEC_REQUIRE(cond, msg) \
  if (!(cond)) return fail(OCPEC_ERR_INVALID_ARGUMENT, msg)

}  // namespace

extern "C" {

const char* ocpec_version(void) { return ocpec::library_version(); }

const char* ocpec_status_string(ocpec_status s) {
  switch (s) {
    case OCPEC_OK: return "ok";
    case OCPEC_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case OCPEC_ERR_PARSE: return "parse_error";
    case OCPEC_ERR_DIMENSION: return "dimension_mismatch";
    case OCPEC_ERR_UNKNOWN_KIND: return "unknown_kind";
    case OCPEC_ERR_INFEASIBLE: return "infeasible";
    case OCPEC_ERR_LCP: return "lcp_failure";
    case OCPEC_ERR_SOLVER: return "solver_failure";
    case OCPEC_ERR_IO: return "io_error";
    case OCPEC_ERR_INTERNAL: return "internal_error";
  }
  return "unknown_status";
}

const char* ocpec_label_string(int label) {
  if (label < 0 || label > 4) return "invalid";
  return ocpec::to_string(static_cast<ocpec::Stationarity>(label));
}

const char* ocpec_last_error(void) { return g_last_error.c_str(); }

void ocpec_options_default(ocpec_options* o) {
  if (!o) return;
  const ocpec::HomotopySchedule s;
  const ocpec::AnalysisOptions a;
  o->tau0 = s.tau0;
  o->tau_min = s.tau_min;
  o->tau_factor = s.factor;
  o->polish = s.polish ? 1 : 0;
  o->tol_act = a.recovery.tol_act;
  o->tol_recover = a.recovery.tol_recover;
  o->tol_sign = a.recovery.tol_sign;
  o->tol_div = a.recovery.tol_div;
  o->eps_meas = a.recovery.eps_meas;
  o->samples = a.samples;
  o->run_weierstrass = 1;
  o->run_cq = 1;
  o->seed = a.seed;
  o->feasibility_tol = a.feasibility_tol;
}

ocpec_status ocpec_problem_builtin(const char* name, ocpec_problem** out) {
  OCPEC_REQUIRE(name && out, "null argument");
  return guarded([&] {
    std::string n(name);
    if (n.rfind("builtin:", 0) == 0) n = n.substr(8);
    return adopt(ocpec::builtin(n), out);
  });
}

ocpec_status ocpec_problem_load(const char* path, ocpec_problem** out) {
  OCPEC_REQUIRE(path && out, "null argument");
  return guarded([&] { return adopt(ocpec::load_problem(path), out); });
}

ocpec_status ocpec_problem_from_json(const char* text, ocpec_problem** out) {
  OCPEC_REQUIRE(text && out, "null argument");
  return guarded([&] { return adopt(ocpec::parse_problem(text), out); });
}

ocpec_status ocpec_problem_autonomize(const ocpec_problem* p, ocpec_problem** out) {
  OCPEC_REQUIRE(p && out, "null argument");
  return guarded([&] { return adopt(ocpec::autonomize(*p->p), out); });
}

ocpec_status ocpec_problem_set_radius(ocpec_problem* p, double radius) {
  OCPEC_REQUIRE(p, "null problem");
  OCPEC_REQUIRE(radius > 0.0, "radius must be positive or infinite");
  // Copy on write: analyses holding the old problem keep their radius.
  auto copy = std::make_shared<ocpec::OcpecProblem>(*p->p);
  copy->radius = radius;
  p->p = std::move(copy);
  return OCPEC_OK;
}

ocpec_status ocpec_problem_dims(const ocpec_problem* p, int* n, int* m, int* l) {
  OCPEC_REQUIRE(p, "null problem");
  if (n) *n = p->p->n;
  if (m) *m = p->p->m;
  if (l) *l = p->p->l;
  return OCPEC_OK;
}

ocpec_status ocpec_problem_is_linear(const ocpec_problem* p, int* linear) {
  OCPEC_REQUIRE(p && linear, "null argument");
  *linear = p->p->linear.has_value() ? 1 : 0;
  return OCPEC_OK;
}

const char* ocpec_problem_name(const ocpec_problem* p) { return p ? p->p->name.c_str() : ""; }

void ocpec_problem_free(ocpec_problem* p) { delete p; }

ocpec_status ocpec_simulate(const ocpec_problem* p, int N, ocpec_trajectory** out) {
  OCPEC_REQUIRE(p && out, "null argument");
  OCPEC_REQUIRE(N >= 2, "N must be at least 2");
  return guarded([&] {
    auto* t = new ocpec_trajectory;
    try {
      t->traj = ocpec::simulate_lcs(*p->p, N);
    } catch (...) {
      delete t;
      throw;
    }
    *out = t;
    return OCPEC_OK;
  });
}

ocpec_status ocpec_solve(const ocpec_problem* p, int N, const ocpec_options* opts, ocpec_trajectory** out) {
  OCPEC_REQUIRE(p && out, "null argument");
  OCPEC_REQUIRE(N >= 2, "N must be at least 2");
  ocpec_options o;
  ocpec_options_default(&o);
  if (opts) o = *opts;
  if (const ocpec_status s = check_options(o)) return s;
  return guarded([&] {
    const ocpec::FiniteMpec fm = ocpec::discretize(p->p, N);
    ocpec::SolveResult r = ocpec::solve_homotopy(fm, schedule(o));
    auto* t = new ocpec_trajectory;
    t->traj = std::move(r.trajectory);
    t->solve = std::move(r.info);
    *out = t;
    return OCPEC_OK;
  });
}

ocpec_status ocpec_trajectory_read_csv(const ocpec_problem* p, const char* path, ocpec_trajectory** out) {
  OCPEC_REQUIRE(p && path && out, "null argument");
  return guarded([&] {
    std::ifstream f(path);
    if (!f) return fail(OCPEC_ERR_IO, std::string("cannot open '") + path + "'");
    auto* t = new ocpec_trajectory;
    try {
      t->traj = ocpec::read_trajectory_csv(f, p->p->n, p->p->m);
    } catch (...) {
      delete t;
      throw;
    }
    *out = t;
    return OCPEC_OK;
  });
}

ocpec_status ocpec_trajectory_write_csv(const ocpec_trajectory* t, const char* path) {
  OCPEC_REQUIRE(t, "null trajectory");
  return guarded([&] {
    std::ostringstream os;
    ocpec::write_trajectory_csv(os, t->traj);
    return write_file(path, os.str());
  });
}

ocpec_status ocpec_trajectory_dims(const ocpec_trajectory* t, int* N, int* n, int* m) {
  OCPEC_REQUIRE(t, "null trajectory");
  if (N) *N = t->traj.intervals();
  if (n) *n = static_cast<int>(t->traj.x.rows());
  if (m) *m = static_cast<int>(t->traj.u.rows());
  return OCPEC_OK;
}

ocpec_status ocpec_trajectory_node(const ocpec_trajectory* t, int k, double* time, double* x, double* u) {
  OCPEC_REQUIRE(t, "null trajectory");
  OCPEC_REQUIRE(k >= 0 && k < t->traj.nodes(), "node index out of range");
  if (time) *time = t->traj.t(k);
  if (x) for (Eigen::Index i = 0; i < t->traj.x.rows(); ++i) x[i] = t->traj.x(i, k);
  if (u) for (Eigen::Index j = 0; j < t->traj.u.rows(); ++j) u[j] = t->traj.u(j, k);
  return OCPEC_OK;
}

const char* ocpec_trajectory_solver_status(const ocpec_trajectory* t) {
  if (!t || !t->solve) return "none";
  return t->solve->status.c_str();
}

ocpec_status ocpec_trajectory_max_residual(const ocpec_problem* p, const ocpec_trajectory* t, double* out) {
  OCPEC_REQUIRE(p && t && out, "null argument");
  return guarded([&] {
    if (t->traj.x.rows() != p->p->n || t->traj.u.rows() != p->p->m) {
      return fail(OCPEC_ERR_DIMENSION, "trajectory does not match the problem dimensions");
    }
    const ocpec::FiniteMpec fm = ocpec::discretize(p->p, t->traj.intervals());
    *out = ocpec::residuals(fm, t->traj, true).max();
    return OCPEC_OK;
  });
}

void ocpec_trajectory_free(ocpec_trajectory* t) { delete t; }

ocpec_status ocpec_analyze(const ocpec_problem* p, const ocpec_trajectory* t, const ocpec_options* opts,
                           ocpec_analysis** out) {
  OCPEC_REQUIRE(p && t && out, "null argument");
  ocpec_options o;
  ocpec_options_default(&o);
  if (opts) o = *opts;
  if (const ocpec_status s = check_options(o)) return s;
  return guarded([&] {
    auto* h = new ocpec_analysis;
    try {
      h->a = ocpec::analyze(p->p, t->traj, analysis_options(o), t->solve ? &*t->solve : nullptr);
      h->json = ocpec::report_json(h->a);
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
    if (h->a.status == "infeasible") {
      return fail(OCPEC_ERR_INFEASIBLE, "trajectory violates the constraints: max residual " +
                                            ocpec::format_double(h->a.feasibility.max()));
    }
    return OCPEC_OK;
  });
}

ocpec_status ocpec_analysis_summary(const ocpec_analysis* h, ocpec_summary* out) {
  OCPEC_REQUIRE(h && out, "null argument");
  const ocpec::Analysis& a = h->a;
  *out = ocpec_summary{};
  out->N = a.trajectory.intervals();
  out->max_feasibility_residual = a.feasibility.max();
  if (a.recovery.lambda.nodes.empty()) {
    out->lambda0 = -1;
    return OCPEC_OK;
  }
  out->lambda0 = a.recovery.arc.lambda0;
  out->aggregate_lambda = static_cast<int>(a.classification.aggregate_lambda);
  out->aggregate_eta = static_cast<int>(a.classification.aggregate_eta);
  out->divergence_fraction = a.classification.divergence_fraction;
  out->weierstrass_violations = a.weierstrass ? static_cast<int>(a.weierstrass->violations.size()) : 0;
  for (const auto& f : a.fj) {
    out->fj_invoked += f.invoked;
    out->fj_passed += f.invoked && f.ok;
  }
  for (const auto& v : a.cq) {
    out->licq_fail_nodes += v.ok && !v.licq.holds;
    out->inconclusive_nodes += v.ok && v.quasi_normality.verdict == ocpec::QuasiNormality::Inconclusive;
  }
  return OCPEC_OK;
}

ocpec_status ocpec_analysis_node(const ocpec_analysis* h, int k, double* lam_G, double* lam_H,
                                 double* eta_G, double* eta_H, int* label_lambda, int* label_eta) {
  OCPEC_REQUIRE(h, "null analysis");
  const ocpec::Analysis& a = h->a;
  if (a.recovery.lambda.nodes.empty()) return fail(OCPEC_ERR_INFEASIBLE, "no multipliers: trajectory was infeasible");
  OCPEC_REQUIRE(k >= 0 && k < a.trajectory.nodes(), "node index out of range");
  const auto ks = static_cast<std::size_t>(k);
  const auto& lm = a.recovery.lambda.nodes[ks];
  const auto& em = a.eta_set.nodes[ks];
  for (Eigen::Index i = 0; i < lm.lam_G.size(); ++i) {
    if (lam_G) lam_G[i] = lm.lam_G(i);
    if (lam_H) lam_H[i] = lm.lam_H(i);
    if (eta_G) eta_G[i] = em.lam_G(i);
    if (eta_H) eta_H[i] = em.lam_H(i);
  }
  if (label_lambda) *label_lambda = static_cast<int>(a.classification.label_lambda[ks]);
  if (label_eta) *label_eta = static_cast<int>(a.classification.label_eta[ks]);
  return OCPEC_OK;
}

ocpec_status ocpec_analysis_adjoint(const ocpec_analysis* h, int k, double* p) {
  OCPEC_REQUIRE(h && p, "null argument");
  const ocpec::Analysis& a = h->a;
  if (a.recovery.lambda.nodes.empty()) return fail(OCPEC_ERR_INFEASIBLE, "no adjoint: trajectory was infeasible");
  OCPEC_REQUIRE(k >= 0 && k < a.trajectory.nodes(), "node index out of range");
  for (Eigen::Index i = 0; i < a.recovery.arc.p.rows(); ++i) p[i] = a.recovery.arc.p(i, k);
  return OCPEC_OK;
}

const char* ocpec_analysis_report_json(const ocpec_analysis* h) { return h ? h->json.c_str() : ""; }

ocpec_status ocpec_analysis_write_multipliers_csv(const ocpec_analysis* h, const char* path) {
  OCPEC_REQUIRE(h, "null analysis");
  if (h->a.recovery.lambda.nodes.empty()) return fail(OCPEC_ERR_INFEASIBLE, "no multipliers: trajectory was infeasible");
  return guarded([&] {
    std::ostringstream os;
    ocpec::write_multipliers_csv(os, h->a.trajectory, h->a.recovery.lambda, h->a.eta_set);
    return write_file(path, os.str());
  });
}

ocpec_status ocpec_analysis_write_adjoint_csv(const ocpec_analysis* h, const char* path) {
  OCPEC_REQUIRE(h, "null analysis");
  if (h->a.recovery.lambda.nodes.empty()) return fail(OCPEC_ERR_INFEASIBLE, "no adjoint: trajectory was infeasible");
  return guarded([&] {
    std::ostringstream os;
    ocpec::write_adjoint_csv(os, h->a.trajectory, h->a.recovery.arc);
    return write_file(path, os.str());
  });
}

ocpec_status ocpec_analysis_write_report(const ocpec_analysis* h, const char* path) {
  OCPEC_REQUIRE(h, "null analysis");
  return guarded([&] { return write_file(path, h->json + "\n"); });
}

void ocpec_analysis_free(ocpec_analysis* a) { delete a; }

}  // extern "C"
