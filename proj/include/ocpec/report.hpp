#pragma once

#include "ocpec/cq.hpp"
#include "ocpec/stationarity.hpp"
#include "ocpec/transcribe.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ocpec {

// Shortest round-trip decimal with 17 significant digits; non-finite values
// print as inf, -inf and nan.
std::string format_double(double v);

void write_trajectory_csv(std::ostream& os, const DiscreteTrajectory& traj);
// Header must be t,x1..xn,u1..um; the grid must be increasing.
DiscreteTrajectory read_trajectory_csv(std::istream& is, int n, int m);

void write_multipliers_csv(std::ostream& os, const DiscreteTrajectory& traj,
                           const MultiplierSet& lambda, const MultiplierSet& eta);
void write_adjoint_csv(std::ostream& os, const DiscreteTrajectory& traj, const AdjointArc& arc);

struct AnalysisOptions {
  RecoveryOptions recovery;
  CqOptions cq;
  bool run_cq = true;
  bool run_weierstrass = true;
  int samples = 200;
  std::uint64_t seed = 1;
  double feasibility_tol = 1e-6;
};

struct Lambda0Outcome {
  int lambda0 = 1;
  double max_residual = 0.0;
  double transversality_residual = 0.0;
  bool nontrivial = true;
  bool accepted = false;
};

struct Analysis {
  ProblemPtr problem;
  DiscreteTrajectory trajectory;
  std::optional<SolveInfo> solve;
  std::optional<double> simulation_gap;  // ||x_solve - x_sim||_inf when simulated
  ResidualReport feasibility;
  Recovery recovery;
  std::vector<Lambda0Outcome> lambda0_outcomes;
  std::vector<EtaResult> eta;
  MultiplierSet eta_set;
  StationarityReport classification;
  std::optional<WeierstrassReport> weierstrass;
  std::vector<FjCrosscheck> fj;
  std::vector<CqVerdict> cq;
  AnalysisOptions options;
  std::string status;  // ok | not_converged | infeasible | recovery_failed
};

// Adjoint recovery, both multiplier sets, classification, Weierstrass
// sampling, the FJ cross-check and (optionally) the CQ audit. For a fixed
// final state lambda0 = 1 is tried first and lambda0 = 0 when it fails.
Analysis analyze(ProblemPtr p, const DiscreteTrajectory& traj, const AnalysisOptions& opts,
                 const SolveInfo* solve = nullptr);

std::string report_json(const Analysis& a, int indent = 2);

const char* library_version();

}  // namespace ocpec
