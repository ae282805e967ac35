#include "ocpec/report.hpp"

#include "ocpec/lcp.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace ocpec {

using nlohmann::ordered_json;

const char* library_version() { return "0.1.0"; }

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void header(std::ostream& os, const char* prefix, Eigen::Index count) {
  for (Eigen::Index i = 1; i <= count; ++i) os << ',' << prefix << i;
}

void row(std::ostream& os, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << format_double(v(i));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

double parse_cell(const std::string& s, int line) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Parse, "trajectory CSV line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

ordered_json vec(const Vec& v) {
  ordered_json a = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

ordered_json ints(const std::vector<int>& v) {
  ordered_json a = ordered_json::array();
  for (int i : v) a.push_back(i);
  return a;
}

ordered_json multipliers(const NodeMultipliers& m) {
  return {{"g", vec(m.lam_g)}, {"h", vec(m.lam_h)}, {"G", vec(m.lam_G)},
          {"H", vec(m.lam_H)}, {"zeta", vec(m.zeta)}, {"residual", num(m.residual)}};
}

ordered_json problem_json(const OcpecProblem& p) {
  const Endpoint& e = p.endpoint;
  ordered_json ep = {{"kind", to_string(e.kind)},
                     {"x0_lo", vec(e.x0_lo)},
                     {"x0_hi", vec(e.x0_hi)},
                     {"x1_lo", vec(e.x1_lo)},
                     {"x1_hi", vec(e.x1_hi)}};
  ordered_json j = {{"name", p.name},   {"kind", to_string(p.kind)}, {"n", p.n},
                    {"m", p.m},         {"l", p.l},                  {"l1", p.l1},
                    {"l2", p.l2},       {"t0", p.t0},                {"t1", p.t1},
                    {"radius", num(p.radius)}, {"affine", p.affine}, {"autonomous", p.autonomous},
                    {"endpoint", ep}};
  if (p.control_set.bounded) {
    j["control_set"] = {{"lo", vec(p.control_set.lo)}, {"hi", vec(p.control_set.hi)}};
  } else {
    j["control_set"] = nullptr;
  }
  return j;
}

ordered_json residual_json(const ResidualReport& r) {
  return {{"dynamics", num(r.dynamics)}, {"g", num(r.g)},
          {"h", num(r.h)},               {"G", num(r.G)},
          {"H", num(r.H)},               {"complementarity", num(r.complementarity)},
          {"bounds", num(r.bounds)},     {"max", num(r.max())}};
}

ordered_json solve_json(const SolveInfo& s) {
  ordered_json stages = ordered_json::array();
  for (const StageInfo& st : s.stages) {
    stages.push_back({{"tau", num(st.tau)},
                      {"complementarity", num(st.complementarity)},
                      {"first_order", num(st.first_order)},
                      {"feasibility", num(st.feasibility)},
                      {"rho", num(st.rho)},
                      {"outer_iterations", st.outer_iterations},
                      {"inner_iterations", st.inner_iterations},
                      {"accepted", st.accepted},
                      {"status", st.status}});
  }
  const PolishInfo& p = s.polish;
  return {{"status", s.status},
          {"objective", num(s.objective)},
          {"complementarity", num(s.complementarity)},
          {"first_order", num(s.first_order)},
          {"iterations", s.iterations},
          {"initial_guess_from_simulation", s.initial_guess_from_simulation},
          {"residuals", residual_json(s.residuals)},
          {"stages", stages},
          {"polish",
           {{"attempted", p.attempted},
            {"applied", p.applied},
            {"threshold", num(p.threshold)},
            {"pinned_G", p.pinned_g},
            {"pinned_H", p.pinned_h},
            {"pinned_both", p.pinned_both},
            {"first_order", num(p.first_order)},
            {"feasibility", num(p.feasibility)},
            {"objective_change", num(p.objective_change)},
            {"move", num(p.move)}}}};
}

ordered_json cq_json(const CqVerdict& v) {
  ordered_json j = {{"node", v.node}, {"ok", v.ok}};
  if (!v.ok) {
    j["error"] = v.error;
    return j;
  }
  const AbnormalResult& q = v.quasi_normality;
  ordered_json qn = {{"verdict", to_string(q.verdict)},
                     {"branches_examined", q.branches_examined},
                     {"witness", nullptr}};
  if (q.witness) {
    qn["witness"] = multipliers(*q.witness);
    qn["witness_branch"] = ints(q.witness_branch);
    qn["witness_violates_wbcq"] = q.witness_violates_wbcq;
    qn["witness_grad_x_norm"] = num(q.witness_grad_x_norm);
  }
  j["licq"] = {{"verdict", v.licq.holds ? "holds" : "fails"},
               {"min_singular_value", num(v.licq.min_singular_value)},
               {"rows", v.licq.rows}};
  j["quasi_normality"] = qn;
  j["kappa"] = {{"value", num(v.kappa.kappa)}, {"patterns", v.kappa.patterns}, {"face_exact", v.kappa.face_exact}};
  j["bounded_slope"] = {{"k_S", num(v.slope.k_S)},
                        {"k_g", num(v.slope.k_g)},
                        {"k_h", num(v.slope.k_h)},
                        {"k_G", num(v.slope.k_G)},
                        {"k_H", num(v.slope.k_H)},
                        {"method", v.slope.method},
                        {"samples", v.slope.samples},
                        {"tube", num(v.slope.tube)}};
  j["linear_condition"] = v.linear_condition;
  j["error_bound_certified"] = v.error_bound_certified;
  return j;
}

double max_residual(const Recovery& r) {
  double m = 0.0;
  for (std::size_t k = 0; k < r.lambda.nodes.size(); ++k) {
    if (r.context[k].ok) m = std::max(m, r.lambda.nodes[k].residual);
  }
  return m;
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const DiscreteTrajectory& traj) {
  os << 't';
  header(os, "x", traj.x.rows());
  header(os, "u", traj.u.rows());
  os << '\n';
  for (int k = 0; k < traj.nodes(); ++k) {
    os << format_double(traj.t(k));
    row(os, traj.x.col(k));
    row(os, traj.u.col(k));
    os << '\n';
  }
}

DiscreteTrajectory read_trajectory_csv(std::istream& is, int n, int m) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::Parse, "trajectory CSV is empty");
  std::ostringstream expect;
  expect << 't';
  header(expect, "x", n);
  header(expect, "u", m);
  std::string got;
  for (const std::string& c : split(line)) got += (got.empty() ? "" : ",") + c;
  if (got != expect.str()) {
    throw Error(ErrorCode::Parse, "trajectory CSV header: expected '" + expect.str() + "', got '" + got + "'");
  }
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto cells = split(line);
    if (static_cast<int>(cells.size()) != 1 + n + m) {
      throw Error(ErrorCode::Parse, "trajectory CSV line " + std::to_string(lineno) + ": expected " +
                                        std::to_string(1 + n + m) + " columns, got " +
                                        std::to_string(cells.size()));
    }
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(parse_cell(c, lineno));
    rows.push_back(std::move(r));
  }
  if (rows.size() < 3) throw Error(ErrorCode::InvalidArgument, "trajectory CSV needs at least 3 nodes");
  const auto K = static_cast<Eigen::Index>(rows.size());
  DiscreteTrajectory traj;
  traj.t.resize(K);
  traj.x.resize(n, K);
  traj.u.resize(m, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& r = rows[static_cast<std::size_t>(k)];
    traj.t(k) = r[0];
    for (int i = 0; i < n; ++i) traj.x(i, k) = r[static_cast<std::size_t>(1 + i)];
    for (int j = 0; j < m; ++j) traj.u(j, k) = r[static_cast<std::size_t>(1 + n + j)];
    if (k > 0 && !(traj.t(k) > traj.t(k - 1))) {
      throw Error(ErrorCode::InvalidArgument, "trajectory CSV: time grid must be increasing");
    }
  }
  return traj;
}

void write_multipliers_csv(std::ostream& os, const DiscreteTrajectory& traj,
                           const MultiplierSet& lambda, const MultiplierSet& eta) {
  const Eigen::Index l = lambda.nodes.empty() ? 0 : lambda.nodes[0].lam_G.size();
  os << 't';
  header(os, "lamG", l);
  header(os, "lamH", l);
  header(os, "etaG", l);
  header(os, "etaH", l);
  os << ",residual\n";
  for (int k = 0; k < traj.nodes(); ++k) {
    const auto ks = static_cast<std::size_t>(k);
    os << format_double(traj.t(k));
    row(os, lambda.nodes[ks].lam_G);
    row(os, lambda.nodes[ks].lam_H);
    row(os, eta.nodes[ks].lam_G);
    row(os, eta.nodes[ks].lam_H);
    os << ',' << format_double(std::max(lambda.nodes[ks].residual, eta.nodes[ks].residual)) << '\n';
  }
}

void write_adjoint_csv(std::ostream& os, const DiscreteTrajectory& traj, const AdjointArc& arc) {
  os << 't';
  header(os, "p", arc.p.rows());
  os << '\n';
  for (int k = 0; k < traj.nodes(); ++k) {
    os << format_double(traj.t(k));
    row(os, arc.p.col(k));
    os << '\n';
  }
}

Analysis analyze(ProblemPtr p, const DiscreteTrajectory& traj, const AnalysisOptions& opts,
                 const SolveInfo* solve) {
  if (!p) throw Error(ErrorCode::InvalidArgument, "analyze: null problem");
  const OcpecProblem& P = *p;
  if (traj.x.rows() != P.n || traj.u.rows() != P.m || traj.x.cols() != traj.nodes() ||
      traj.u.cols() != traj.nodes()) {
    throw Error(ErrorCode::DimensionMismatch, "analyze: trajectory does not match the problem dimensions");
  }
  const int N = traj.intervals();
  if (N < 2) throw Error(ErrorCode::InvalidArgument, "analyze: need N >= 2");
  Analysis a;
  a.problem = p;
  a.trajectory = traj;
  a.options = opts;
  if (solve) a.solve = *solve;

  const FiniteMpec fm = discretize(p, N);
  for (int k = 0; k <= N; ++k) {
    if (std::abs(fm.time(k) - traj.t(k)) > 1e-9 * (1.0 + std::abs(fm.time(k)))) {
      throw Error(ErrorCode::InvalidArgument, "analyze: trajectory grid is not the uniform grid on [t0, t1] with " +
                                                  std::to_string(N) + " intervals");
    }
  }
  a.feasibility = residuals(fm, traj, true);
  if (P.linear && solve) {
    try {
      const DiscreteTrajectory sim = simulate_lcs(P, N, traj.x.col(0));
      a.simulation_gap = (sim.x - traj.x).cwiseAbs().maxCoeff();
    } catch (const Error&) {
      a.simulation_gap.reset();
    }
  }
  if (a.feasibility.max() > opts.feasibility_tol) {
    a.status = "infeasible";
    return a;
  }

  // Multiplier normalization.
  const RecoveryOptions& ro = opts.recovery;
  auto outcome = [&](const Recovery& r) {
    Lambda0Outcome o;
    o.lambda0 = r.arc.lambda0;
    o.max_residual = max_residual(r);
    o.transversality_residual = r.arc.transversality_residual;
    o.nontrivial = r.arc.nontrivial;
    o.accepted = o.nontrivial && o.max_residual <= ro.tol_recover && o.transversality_residual <= ro.tol_recover;
    return o;
  };
  a.recovery = recover_adjoint(P, traj, 1, ro);
  a.lambda0_outcomes.push_back(outcome(a.recovery));
  if (!P.endpoint.final_free() && !a.lambda0_outcomes.back().accepted) {
    Recovery r0 = recover_adjoint(P, traj, 0, ro);
    a.lambda0_outcomes.push_back(outcome(r0));
    if (a.lambda0_outcomes.back().accepted) a.recovery = std::move(r0);
  }

  for (int k = 0; k <= N; ++k) {
    a.eta.push_back(hamiltonian_multipliers(P, traj, a.recovery.arc, a.recovery.context[static_cast<std::size_t>(k)], k, ro));
    a.eta_set.nodes.push_back(a.eta.back().eta);
  }
  a.classification = classify(a.recovery.lambda, a.eta_set, a.recovery.context, ro);
  for (int k = 0; k <= N; ++k) {
    a.fj.push_back(classical_fj_crosscheck(P, traj, a.recovery.arc, a.recovery.lambda, a.eta_set,
                                           a.recovery.context, k, ro));
  }
  if (opts.run_weierstrass) {
    std::mt19937_64 rng(opts.seed);
    a.weierstrass = weierstrass_check(P, traj, a.recovery.arc, opts.samples, rng);
  }
  if (opts.run_cq) {
    std::mt19937_64 rng(opts.seed + 1);
    a.cq = audit(P, traj, opts.cq, rng);
  }
  a.status = (solve && solve->status != "converged") ? "not_converged" : "ok";
  return a;
}

std::string report_json(const Analysis& a, int indent) {
  const OcpecProblem& P = *a.problem;
  const DiscreteTrajectory& tr = a.trajectory;
  const bool recovered = !a.recovery.lambda.nodes.empty();
  ordered_json j;
  j["problem"] = problem_json(P);
  j["N"] = tr.intervals();
  j["status"] = a.status;
  j["seed"] = a.options.seed;
  j["lambda0"] = recovered ? ordered_json(a.recovery.arc.lambda0) : ordered_json(nullptr);
  j["options"] = {{"tol_act", num(a.options.recovery.tol_act)},
                  {"tol_recover", num(a.options.recovery.tol_recover)},
                  {"tol_sign", num(a.options.recovery.tol_sign)},
                  {"tol_div", num(a.options.recovery.tol_div)},
                  {"eps_meas", num(a.options.recovery.eps_meas)},
                  {"samples", a.options.samples},
                  {"feasibility_tol", num(a.options.feasibility_tol)}};
  j["feasibility"] = residual_json(a.feasibility);
  j["solver"] = a.solve ? solve_json(*a.solve) : ordered_json(nullptr);
  j["simulation_gap"] = a.simulation_gap ? num(*a.simulation_gap) : ordered_json(nullptr);

  ordered_json outcomes = ordered_json::array();
  for (const auto& o : a.lambda0_outcomes) {
    outcomes.push_back({{"lambda0", o.lambda0},
                        {"max_residual", num(o.max_residual)},
                        {"transversality_residual", num(o.transversality_residual)},
                        {"nontrivial", o.nontrivial},
                        {"accepted", o.accepted}});
  }
  j["lambda0_outcomes"] = outcomes;

  ordered_json per_node = ordered_json::array();
  if (recovered) {
    const AdjointArc& arc = a.recovery.arc;
    j["adjoint"] = {{"terminal", arc.terminal},
                    {"xi0", vec(arc.xi0)},
                    {"xi1", vec(arc.xi1)},
                    {"transversality_residual", num(arc.transversality_residual)},
                    {"nontrivial", arc.nontrivial},
                    {"correction_iterations", arc.correction_iterations}};
    const StationarityReport& c = a.classification;
    for (int k = 0; k <= tr.intervals(); ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const NodeContext& ctx = a.recovery.context[ks];
      ordered_json node = {{"k", k}, {"t", num(tr.t(k))}, {"x", vec(tr.x.col(k))},
                           {"u", vec(tr.u.col(k))}, {"p", vec(arc.p.col(k))}};
      if (ctx.ok) {
        node["index_sets"] = {{"I_minus", ints(ctx.sets.i_minus)}, {"I_zero", ints(ctx.sets.i_zero)},
                              {"I_plus0", ints(ctx.sets.i_plus0)}, {"I_00", ints(ctx.sets.i_00)},
                              {"I_0plus", ints(ctx.sets.i_0plus)}};
      } else {
        node["index_sets"] = nullptr;
        node["error"] = ctx.error;
      }
      node["lambda"] = multipliers(a.recovery.lambda.nodes[ks]);
      node["eta"] = multipliers(a.eta[ks].eta);
      node["eta_branch"] = ints(a.eta[ks].branch);
      node["eta_m_feasible"] = a.eta[ks].m_feasible;
      node["eta_c_fallback"] = a.eta[ks].c_fallback;
      node["label_lambda"] = to_string(c.label_lambda[ks]);
      node["label_eta"] = to_string(c.label_eta[ks]);
      node["divergence_gap"] = num(c.divergence_gap[ks]);
      if (a.weierstrass) {
        const WeierstrassNode& w = a.weierstrass->nodes[ks];
        node["weierstrass"] = {{"feasible_samples", w.feasible_samples},
                               {"best_gain", num(w.best_gain)},
                               {"violation", w.violation}};
      }
      const FjCrosscheck& fj = a.fj[ks];
      node["fj_crosscheck"] = {{"invoked", fj.invoked}, {"ok", fj.ok}, {"residual", num(fj.residual)}, {"c", num(fj.c)}};
      per_node.push_back(node);
    }
    j["aggregate"] = {{"lambda", to_string(c.aggregate_lambda)},
                      {"eta", to_string(c.aggregate_eta)},
                      {"eps_meas", num(c.eps_meas)},
                      {"measure", "node_fraction"}};
    double gmax = 0.0;
    for (double g : c.divergence_gap) gmax = std::max(gmax, g);
    j["divergence"] = {{"fraction", num(c.divergence_fraction)},
                       {"nodes", ints(c.divergence_nodes)},
                       {"tol_div", num(c.tol_div)},
                       {"max_gap", num(gmax)}};
    int invoked = 0, passed = 0;
    for (const auto& f : a.fj) {
      invoked += f.invoked;
      passed += f.invoked && f.ok;
    }
    j["fj_crosscheck"] = {{"invoked", invoked}, {"passed", passed}};
  } else {
    j["adjoint"] = nullptr;
    j["aggregate"] = nullptr;
    j["divergence"] = nullptr;
    j["fj_crosscheck"] = nullptr;
  }
  j["per_node"] = per_node;

  if (a.weierstrass) {
    const WeierstrassReport& w = *a.weierstrass;
    j["weierstrass"] = {{"radius", num(w.radius_used)},
                        {"radius_was_infinite", w.radius_was_infinite},
                        {"ball", "open"},
                        {"samples_per_node", w.samples_per_node},
                        {"violations", ints(w.violations)},
                        {"unsampled", ints(w.unsampled)}};
  } else {
    j["weierstrass"] = nullptr;
  }

  if (!a.cq.empty()) {
    ordered_json nodes = ordered_json::array();
    std::vector<int> licq_fail, inconclusive;
    for (const CqVerdict& v : a.cq) {
      nodes.push_back(cq_json(v));
      if (v.ok && !v.licq.holds) licq_fail.push_back(v.node);
      if (v.ok && v.quasi_normality.verdict == QuasiNormality::Inconclusive) inconclusive.push_back(v.node);
    }
    j["cq"] = {{"linear_condition", linear_condition(P)},
               {"error_bound_certified", linear_condition(P)},
               {"licq_fail_nodes", ints(licq_fail)},
               {"inconclusive_nodes", ints(inconclusive)},
               {"nodes", nodes}};
  } else {
    j["cq"] = nullptr;
  }
  j["versions"] = {{"ocpec", library_version()},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                 "." + std::to_string(EIGEN_MINOR_VERSION)},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"report_schema", "1"}};
  return j.dump(indent);
}

}  // namespace ocpec
