// Runs the command-line binary as a subprocess.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int exit_code = -1;
  std::string out;
  json j;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(OCPEC_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* f = popen(cmd.c_str(), "r");
  REQUIRE(f != nullptr);
  std::array<char, 4096> buf{};
  size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), f)) > 0) r.out.append(buf.data(), got);
  const int st = pclose(f);
  r.exit_code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  // The summary or error object is the last line of stdout.
  std::string body = r.out;
  while (!body.empty() && body.back() == '\n') body.pop_back();
  const auto nl = body.rfind('\n');
  r.j = json::parse(nl == std::string::npos ? body : body.substr(nl + 1), nullptr, false);
  return r;
}

fs::path scratch(const char* name) {
  const fs::path d = fs::temp_directory_path() / (std::string("ocpec_cli_") + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

int data_rows(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  int rows = -1;  // header
  while (std::getline(is, line)) {
    if (!line.empty()) ++rows;
  }
  return rows;
}

}  // namespace

TEST_CASE("simulate writes N + 1 rows") {
  const fs::path d = scratch("simulate");
  const Run r = cli("simulate --problem builtin:linear_lcs --nodes 11 --out " + d.string());
  CHECK(r.exit_code == 0);
  CHECK(r.j["status"] == "ok");
  CHECK(r.j["command"] == "simulate");
  CHECK(data_rows(d / "trajectory.csv") == 12);
  CHECK(slurp(d / "trajectory.csv").rfind("t,x1,u1\n", 0) == 0);
}

TEST_CASE("pipeline on the counterexample") {
  const fs::path d = scratch("pipeline");
  const Run r = cli("pipeline --problem builtin:counterexample --nodes 100 --samples 50 --out " + d.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.j["aggregate_eta"] == "M");
  CHECK(r.j["aggregate_lambda"] == "W");
  CHECK(r.j["divergence_fraction"].get<double>() >= 0.9);
  CHECK(r.j["weierstrass_violations"] == 0);
  for (const char* f : {"trajectory.csv", "multipliers.csv", "adjoint.csv", "report.json"})
    CHECK_MESSAGE(fs::exists(d / f), f);
  CHECK_FALSE(fs::exists(d / "simulation.csv"));
  const json rep = json::parse(slurp(d / "report.json"));
  CHECK(rep["status"] == "ok");
  CHECK(rep["per_node"].size() == 101);
  CHECK(data_rows(d / "multipliers.csv") == 101);
}

TEST_CASE("pipeline on the linear kind also simulates") {
  const fs::path d = scratch("pipeline_linear");
  const Run r = cli("pipeline --problem builtin:linear_lcs --nodes 30 --samples 20 --out " + d.string());
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(d / "simulation.csv"));
  const json rep = json::parse(slurp(d / "report.json"));
  CHECK(rep["simulation_gap"].get<double>() <= 1e-4);
}

TEST_CASE("outputs are deterministic for a fixed seed") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const std::string args = "pipeline --problem builtin:counterexample --nodes 30 --samples 30 --seed 7 --out ";
  REQUIRE(cli(args + a.string()).exit_code == 0);
  REQUIRE(cli(args + b.string()).exit_code == 0);
  for (const char* f : {"trajectory.csv", "multipliers.csv", "adjoint.csv", "report.json"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  CHECK(json::parse(slurp(a / "report.json"))["seed"] == 7);
}

TEST_CASE("check and cq on a given trajectory") {
  const fs::path d = scratch("check");
  REQUIRE(cli("solve --problem builtin:counterexample --nodes 20 --out " + d.string()).exit_code == 0);
  const std::string traj = (d / "trajectory.csv").string();
  const Run c = cli("check --problem builtin:counterexample --samples 20 --traj " + traj + " --out " + (d / "c").string());
  CHECK(c.exit_code == 0);
  CHECK(json::parse(slurp(d / "c" / "report.json"))["cq"].is_null());
  const Run q = cli("cq --problem builtin:counterexample --traj " + traj + " --out " + (d / "q").string());
  CHECK(q.exit_code == 0);
  CHECK(q.j["licq_fail_nodes"] == 21);
  CHECK(q.j["inconclusive_nodes"] == 21);
}

TEST_CASE("infeasible trajectory exits with 3") {
  const fs::path d = scratch("infeasible");
  fs::create_directories(d);
  {
    std::ofstream os(d / "bad.csv");
    os << "t,x1,u1\n";
    for (int k = 0; k <= 10; ++k) os << k / 10.0 << ",0,1\n";
  }
  const Run r = cli("check --problem builtin:counterexample --traj " + (d / "bad.csv").string() + " --out " + d.string());
  CHECK(r.exit_code == 3);
  CHECK(r.j["status"] == "error");
  CHECK(r.j["code"] == "infeasible");
  CHECK(r.j["stage"] == "feasibility");
  CHECK(r.j["max_residual"].get<double>() >= 1.0);
  CHECK(r.j["message"].get<std::string>().find("max residual") != std::string::npos);
  CHECK(json::parse(slurp(d / "report.json"))["status"] == "infeasible");
}

TEST_CASE("usage and load errors") {
  CHECK(cli("").exit_code == 2);
  const Run missing = cli("solve --nodes 5");
  CHECK(missing.exit_code == 2);
  CHECK(missing.j["status"] == "error");
  CHECK(cli("solve --problem builtin:counterexample --nodes 1").exit_code == 2);
  CHECK(cli("check --problem builtin:counterexample --radius abc --traj x.csv").exit_code == 2);
  CHECK(cli("check --problem builtin:counterexample --out " + scratch("notraj").string()).exit_code == 2);
  const Run unknown = cli("solve --problem builtin:nope --out " + scratch("unknown").string());
  CHECK(unknown.exit_code == 1);
  CHECK(unknown.j["code"] == "unknown_kind");
  CHECK(unknown.j["stage"] == "load");
  const Run sim = cli("simulate --problem builtin:counterexample --out " + scratch("simce").string());
  CHECK(sim.exit_code == 1);
  CHECK(sim.j["stage"] == "simulate");
}
