/* C interface to the ocpec library. All handles are opaque; every call that
 * can fail returns an ocpec_status and leaves a message retrievable through
 * ocpec_last_error() on the calling thread. */
#ifndef OCPEC_H
#define OCPEC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define OCPEC_API __declspec(dllexport)
#else
#define OCPEC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ocpec_status {
  OCPEC_OK = 0,
  OCPEC_ERR_INVALID_ARGUMENT = 1,
  OCPEC_ERR_PARSE = 2,
  OCPEC_ERR_DIMENSION = 3,
  OCPEC_ERR_UNKNOWN_KIND = 4,
  OCPEC_ERR_INFEASIBLE = 5,
  OCPEC_ERR_LCP = 6,
  OCPEC_ERR_SOLVER = 7,
  OCPEC_ERR_IO = 8,
  OCPEC_ERR_INTERNAL = 9
} ocpec_status;

/* Stationarity labels, ordered by strength. */
typedef enum ocpec_label {
  OCPEC_LABEL_FAILED = 0,
  OCPEC_LABEL_W = 1,
  OCPEC_LABEL_C = 2,
  OCPEC_LABEL_M = 3,
  OCPEC_LABEL_S = 4
} ocpec_label;

typedef struct ocpec_problem ocpec_problem;
typedef struct ocpec_trajectory ocpec_trajectory;
typedef struct ocpec_analysis ocpec_analysis;

typedef struct ocpec_options {
  /* homotopy */
  double tau0;
  double tau_min;
  double tau_factor;
  int polish;
  /* recovery and classification */
  double tol_act;
  double tol_recover;
  double tol_sign;
  double tol_div;
  double eps_meas;
  /* Weierstrass sampling and CQ audit */
  int samples;
  int run_weierstrass;
  int run_cq;
  uint64_t seed;
  double feasibility_tol;
} ocpec_options;

typedef struct ocpec_summary {
  int N;
  int lambda0;
  int aggregate_lambda; /* ocpec_label */
  int aggregate_eta;
  double divergence_fraction;
  int weierstrass_violations;
  int fj_invoked;
  int fj_passed;
  int licq_fail_nodes;
  int inconclusive_nodes;
  double max_feasibility_residual;
} ocpec_summary;

OCPEC_API const char* ocpec_version(void);
OCPEC_API const char* ocpec_status_string(ocpec_status s);
OCPEC_API const char* ocpec_label_string(int label);
/* Message of the last failed call on this thread ("" if none). */
OCPEC_API const char* ocpec_last_error(void);

OCPEC_API void ocpec_options_default(ocpec_options* opts);

/* "counterexample" or "linear_lcs", optionally prefixed with "builtin:". */
OCPEC_API ocpec_status ocpec_problem_builtin(const char* name, ocpec_problem** out);
OCPEC_API ocpec_status ocpec_problem_load(const char* path, ocpec_problem** out);
OCPEC_API ocpec_status ocpec_problem_from_json(const char* text, ocpec_problem** out);
OCPEC_API ocpec_status ocpec_problem_autonomize(const ocpec_problem* p, ocpec_problem** out);
/* Positive value or INFINITY. */
OCPEC_API ocpec_status ocpec_problem_set_radius(ocpec_problem* p, double radius);
OCPEC_API ocpec_status ocpec_problem_dims(const ocpec_problem* p, int* n, int* m, int* l);
OCPEC_API ocpec_status ocpec_problem_is_linear(const ocpec_problem* p, int* linear);
OCPEC_API const char* ocpec_problem_name(const ocpec_problem* p);
OCPEC_API void ocpec_problem_free(ocpec_problem* p);

/* Time-stepping simulation of the linear kind with N intervals. */
OCPEC_API ocpec_status ocpec_simulate(const ocpec_problem* p, int N, ocpec_trajectory** out);
/* Relaxation homotopy on the Euler transcription with N intervals. A
 * trajectory is returned even when the solver stops early; its status is
 * available through ocpec_trajectory_solver_status. */
OCPEC_API ocpec_status ocpec_solve(const ocpec_problem* p, int N, const ocpec_options* opts,
                                   ocpec_trajectory** out);
OCPEC_API ocpec_status ocpec_trajectory_read_csv(const ocpec_problem* p, const char* path,
                                                 ocpec_trajectory** out);
OCPEC_API ocpec_status ocpec_trajectory_write_csv(const ocpec_trajectory* t, const char* path);
OCPEC_API ocpec_status ocpec_trajectory_dims(const ocpec_trajectory* t, int* N, int* n, int* m);
OCPEC_API ocpec_status ocpec_trajectory_node(const ocpec_trajectory* t, int k, double* time,
                                             double* x, double* u);
/* "converged", "stalled", "max_outer", or "none" when not produced by a solve. */
OCPEC_API const char* ocpec_trajectory_solver_status(const ocpec_trajectory* t);
/* Largest transcription residual (dynamics, constraints, complementarity). */
OCPEC_API ocpec_status ocpec_trajectory_max_residual(const ocpec_problem* p,
                                                     const ocpec_trajectory* t, double* out);
OCPEC_API void ocpec_trajectory_free(ocpec_trajectory* t);

/* Adjoint recovery, both multiplier sets, classification, Weierstrass check,
 * FJ cross-check and CQ audit on a trajectory. An infeasible trajectory gives
 * OCPEC_ERR_INFEASIBLE but still returns an analysis whose report carries
 * status "infeasible". */
OCPEC_API ocpec_status ocpec_analyze(const ocpec_problem* p, const ocpec_trajectory* t,
                                     const ocpec_options* opts, ocpec_analysis** out);
OCPEC_API ocpec_status ocpec_analysis_summary(const ocpec_analysis* a, ocpec_summary* out);
/* Multipliers at node k; each array has l entries. */
OCPEC_API ocpec_status ocpec_analysis_node(const ocpec_analysis* a, int k, double* lam_G,
                                           double* lam_H, double* eta_G, double* eta_H,
                                           int* label_lambda, int* label_eta);
OCPEC_API ocpec_status ocpec_analysis_adjoint(const ocpec_analysis* a, int k, double* p);
/* The string is owned by the analysis handle. */
OCPEC_API const char* ocpec_analysis_report_json(const ocpec_analysis* a);
OCPEC_API ocpec_status ocpec_analysis_write_multipliers_csv(const ocpec_analysis* a, const char* path);
OCPEC_API ocpec_status ocpec_analysis_write_adjoint_csv(const ocpec_analysis* a, const char* path);
OCPEC_API ocpec_status ocpec_analysis_write_report(const ocpec_analysis* a, const char* path);
OCPEC_API void ocpec_analysis_free(ocpec_analysis* a);

#ifdef __cplusplus
}
#endif

#endif
