// Command-line front end over the C API.
#include "ocpec.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kError = 1, kUsage = 2, kInfeasible = 3, kNotConverged = 4 };

struct Config {
  std::string command;
  std::string problem;
  std::string traj;
  std::string out = ".";
  std::string radius;
  int nodes = 100;
  int samples = 200;
  std::uint64_t seed = 1;
  ocpec_options opts{};
};

struct Failure {
  int exit_code;
  std::string stage;
  ocpec_status status;
  std::string message;
  ordered_json extra = ordered_json::object();
};

void emit_error(const Config& c, const Failure& f) {
  ordered_json j = {{"status", "error"},
                    {"command", c.command},
                    {"stage", f.stage},
                    {"code", ocpec_status_string(f.status)},
                    {"message", f.message},
                    {"seed", c.seed}};
  for (auto it = f.extra.begin(); it != f.extra.end(); ++it) j[it.key()] = it.value();
  std::cout << j.dump() << std::endl;
}

void check(ocpec_status s, const char* stage, int exit_code = kError) {
  if (s != OCPEC_OK) throw Failure{exit_code, stage, s, ocpec_last_error()};
}

// RAII wrappers for the opaque handles.
struct Problem {
  ocpec_problem* h = nullptr;
  ~Problem() { ocpec_problem_free(h); }
};
struct Trajectory {
  ocpec_trajectory* h = nullptr;
  ~Trajectory() { ocpec_trajectory_free(h); }
};
struct AnalysisH {
  ocpec_analysis* h = nullptr;
  ~AnalysisH() { ocpec_analysis_free(h); }
};

std::string path_in(const Config& c, const char* name) { return (fs::path(c.out) / name).string(); }

void load(const Config& c, Problem& p) {
  if (c.problem.rfind("builtin:", 0) == 0) {
    check(ocpec_problem_builtin(c.problem.c_str(), &p.h), "load");
  } else {
    check(ocpec_problem_load(c.problem.c_str(), &p.h), "load");
  }
  if (!c.radius.empty()) {
    double r = 0.0;
    if (c.radius == "inf" || c.radius == "+inf") {
      r = std::numeric_limits<double>::infinity();
    } else {
      try {
        r = std::stod(c.radius);
      } catch (const std::exception&) {
        throw Failure{kUsage, "config", OCPEC_ERR_INVALID_ARGUMENT, "--radius: expected a number or inf"};
      }
    }
    check(ocpec_problem_set_radius(p.h, r), "config", kUsage);
  }
}

std::string solve(const Config& c, const Problem& p, Trajectory& t, ordered_json& out) {
  check(ocpec_solve(p.h, c.nodes, &c.opts, &t.h), "solve");
  const std::string path = path_in(c, "trajectory.csv");
  check(ocpec_trajectory_write_csv(t.h, path.c_str()), "write");
  out["outputs"].push_back(path);
  const std::string status = ocpec_trajectory_solver_status(t.h);
  out["solver_status"] = status;
  return status;
}

void summarize(const ocpec_summary& s, ordered_json& out) {
  out["N"] = s.N;
  out["lambda0"] = s.lambda0;
  out["aggregate_lambda"] = ocpec_label_string(s.aggregate_lambda);
  out["aggregate_eta"] = ocpec_label_string(s.aggregate_eta);
  out["divergence_fraction"] = s.divergence_fraction;
  out["weierstrass_violations"] = s.weierstrass_violations;
  out["fj_crosscheck"] = {{"invoked", s.fj_invoked}, {"passed", s.fj_passed}};
  out["licq_fail_nodes"] = s.licq_fail_nodes;
  out["inconclusive_nodes"] = s.inconclusive_nodes;
}

// Runs the analysis and writes multipliers, adjoint and report files.
int analyze(const Config& c, const Problem& p, const Trajectory& t, ocpec_options opts, ordered_json& out) {
  AnalysisH a;
  const ocpec_status s = ocpec_analyze(p.h, t.h, &opts, &a.h);
  if (s == OCPEC_ERR_INFEASIBLE && a.h) {
    const std::string message = ocpec_last_error();  // successful calls below reset it
    const std::string report = path_in(c, "report.json");
    ocpec_analysis_write_report(a.h, report.c_str());
    ocpec_summary sum;
    ocpec_analysis_summary(a.h, &sum);
    Failure f{kInfeasible, "feasibility", s, message};
    f.extra["max_residual"] = sum.max_feasibility_residual;
    f.extra["outputs"] = out["outputs"];
    f.extra["outputs"].push_back(report);
    throw f;
  }
  check(s, "analyze");
  const std::string mult = path_in(c, "multipliers.csv");
  const std::string adj = path_in(c, "adjoint.csv");
  const std::string report = path_in(c, "report.json");
  check(ocpec_analysis_write_multipliers_csv(a.h, mult.c_str()), "write");
  check(ocpec_analysis_write_adjoint_csv(a.h, adj.c_str()), "write");
  check(ocpec_analysis_write_report(a.h, report.c_str()), "write");
  out["outputs"].push_back(mult);
  out["outputs"].push_back(adj);
  out["outputs"].push_back(report);
  ocpec_summary sum;
  check(ocpec_analysis_summary(a.h, &sum), "analyze");
  summarize(sum, out);
  return kOk;
}

int run(const Config& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw Failure{kError, "config", OCPEC_ERR_IO, "cannot create output directory '" + c.out + "': " + ec.message()};

  Problem p;
  load(c, p);
  ordered_json out = {{"status", "ok"}, {"command", c.command}, {"problem", ocpec_problem_name(p.h)},
                      {"seed", c.seed}, {"outputs", ordered_json::array()}};
  int code = kOk;

  if (c.command == "simulate") {
    Trajectory t;
    check(ocpec_simulate(p.h, c.nodes, &t.h), "simulate");
    const std::string path = path_in(c, "trajectory.csv");
    check(ocpec_trajectory_write_csv(t.h, path.c_str()), "write");
    out["outputs"].push_back(path);
  } else if (c.command == "solve") {
    Trajectory t;
    if (solve(c, p, t, out) != "converged") code = kNotConverged;
  } else if (c.command == "check" || c.command == "cq") {
    Trajectory t;
    if (!c.traj.empty()) {
      check(ocpec_trajectory_read_csv(p.h, c.traj.c_str(), &t.h), "read");
    } else if (c.command == "cq") {
      if (solve(c, p, t, out) != "converged") code = kNotConverged;
    } else {
      throw Failure{kUsage, "config", OCPEC_ERR_INVALID_ARGUMENT, "check requires --traj"};
    }
    ocpec_options o = c.opts;
    o.run_cq = c.command == "cq";
    o.run_weierstrass = c.command == "check";
    analyze(c, p, t, o, out);
  } else {  // pipeline
    int linear = 0;
    check(ocpec_problem_is_linear(p.h, &linear), "load");
    if (linear) {
      Trajectory sim;
      check(ocpec_simulate(p.h, c.nodes, &sim.h), "simulate");
      const std::string path = path_in(c, "simulation.csv");
      check(ocpec_trajectory_write_csv(sim.h, path.c_str()), "write");
      out["outputs"].push_back(path);
    }
    Trajectory t;
    if (solve(c, p, t, out) != "converged") code = kNotConverged;
    analyze(c, p, t, c.opts, out);
  }
  if (code == kNotConverged) out["status"] = "not_converged";
  std::cout << out.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  Config c;
  ocpec_options_default(&c.opts);
  CLI::App app{"Simulate, solve and certify optimal control problems with complementarity constraints"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ocpec_version());

  const char* names[][2] = {
      {"simulate", "time-step a linear complementarity system"},
      {"solve", "solve the transcribed problem by relaxation homotopy"},
      {"check", "certify a given trajectory (--traj): multipliers, labels, Weierstrass check"},
      {"cq", "constraint-qualification audit on a solved or given trajectory"},
      {"pipeline", "simulate (linear kind), solve, certify and audit"},
  };
  for (auto& nm : names) {
    CLI::App* sub = app.add_subcommand(nm[0], nm[1]);
    sub->add_option("--problem", c.problem, "builtin:<name> or a problem JSON file")->required();
    sub->add_option("--nodes", c.nodes, "number of grid intervals N")->check(CLI::Range(2, 1000000));
    sub->add_option("--tau0", c.opts.tau0, "initial relaxation parameter")->check(CLI::PositiveNumber);
    sub->add_option("--tau-min", c.opts.tau_min, "final relaxation parameter")->check(CLI::PositiveNumber);
    sub->add_option("--tol-act", c.opts.tol_act, "activity tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--tol-div", c.opts.tol_div, "multiplier divergence tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--radius", c.radius, "Weierstrass radius (number or inf)");
    sub->add_option("--samples", c.samples, "Weierstrass samples per node")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", c.seed, "sampling seed");
    sub->add_option("--out", c.out, "output directory");
    if (std::string(nm[0]) == "check" || std::string(nm[0]) == "cq") {
      sub->add_option("--traj", c.traj, "trajectory CSV (t,x1..xn,u1..um)");
    }
    sub->callback([&c, sub] { c.command = sub->get_name(); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error(c, Failure{kUsage, "config", OCPEC_ERR_INVALID_ARGUMENT, e.what()});
    return kUsage;
  }
  c.opts.samples = c.samples;
  c.opts.seed = c.seed;
  try {
    return run(c);
  } catch (const Failure& f) {
    emit_error(c, f);
    return f.exit_code;
  }
}
