#include "oracles.hpp"

#include "ocpec/lcp.hpp"

#include <doctest.h>

using namespace ocpec;

TEST_CASE("lemke small instances") {
  LcpSolution s = lemke({Mat::Identity(1, 1), Vec::Constant(1, -1.0)});
  REQUIRE(s.status == LcpStatus::Solved);
  CHECK(s.z(0) == doctest::Approx(1.0));
  CHECK(std::abs(s.w(0)) <= 1e-14);

  s = lemke({Mat::Identity(1, 1), Vec::Constant(1, 1.0)});
  REQUIRE(s.status == LcpStatus::Solved);
  CHECK(s.z(0) == 0.0);
  CHECK(s.w(0) == doctest::Approx(1.0));

  Mat M(2, 2);
  M << 2, 1, 1, 2;
  s = lemke({M, Vec::Constant(2, -1.0)});
  REQUIRE(s.status == LcpStatus::Solved);
  CHECK(s.z(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(s.z(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(s.w.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("lemke reports ray termination on an unsolvable instance") {
  // w = -z - 1 >= 0 is impossible for z >= 0
  const LcpSolution s = lemke({-Mat::Identity(1, 1), Vec::Constant(1, -1.0)});
  CHECK(s.status == LcpStatus::RayTermination);
}

TEST_CASE("lemke agrees with projected Gauss-Seidel on SPD instances") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 8;
    Mat R(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) R(i, j) = nd(rng);
    const Mat M = R * R.transpose() + 0.5 * Mat::Identity(n, n);
    Vec q(n);
    for (int i = 0; i < n; ++i) q(i) = nd(rng);
    const LcpSolution s = lemke({M, q});
    REQUIRE(s.status == LcpStatus::Solved);
    const Vec z = oracle::pgs_lcp(M, q);
    REQUIRE(oracle::lcp_residual(M, q, z) <= 1e-12);
    CHECK((s.z - z).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(lcp_residual({M, q}, s.z) <= 1e-10);
  }
}

TEST_CASE("simulate_lcs follows the scalar recursion") {
  for (double x0 : {1.0, -1.0}) {
    OcpecProblem p = builtin("linear_lcs");
    p.endpoint = Endpoint::fixed_initial(Vec::Constant(1, x0));
    const DiscreteTrajectory tr = simulate_lcs(p, 11);
    const auto ref = oracle::scalar_lcs_recursion(x0, 1.0 / 11, 11);
    REQUIRE(tr.nodes() == 12);
    for (int k = 0; k <= 11; ++k) {
      CHECK(tr.x(0, k) == doctest::Approx(ref[static_cast<std::size_t>(k)]).epsilon(1e-13));
      CHECK(tr.u(0, k) == doctest::Approx(std::max(0.0, -tr.x(0, k))).epsilon(1e-13));
    }
    if (x0 < 0) CHECK(tr.u(0, 0) == doctest::Approx(1.0));
  }
}

TEST_CASE("simulate_lcs with large q leaves the control at zero") {
  LinearLcsData d;
  d.A = Mat::Constant(1, 1, -0.5);
  d.B = Mat::Ones(1, 1);
  d.c = Vec::Constant(1, 0.2);
  d.C = Mat::Ones(1, 1);
  d.D = Mat::Ones(1, 1);
  d.q = Vec::Constant(1, 100.0);
  d.target = Vec::Zero(1);
  const OcpecProblem p = make_linear_lcs(d, 0, 1, Endpoint::fixed_initial(Vec::Ones(1)));
  const DiscreteTrajectory tr = simulate_lcs(p, 20);
  CHECK(tr.u.cwiseAbs().maxCoeff() == 0.0);
  double x = 1.0;
  for (int k = 1; k <= 20; ++k) {
    x += 0.05 * (-0.5 * x + 0.2);
    CHECK(tr.x(0, k) == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("simulate_lcs keeps complementarity tight at every node") {
  const OcpecProblem p = builtin("linear_lcs");
  const DiscreteTrajectory tr = simulate_lcs(p, 50);
  for (int k = 0; k <= 50; ++k) {
    const double u = tr.u(0, k), w = tr.x(0, k) + u;
    CHECK(u >= -1e-10);
    CHECK(w >= -1e-10);
    CHECK(std::abs(u * w) <= 1e-10);
  }
}

TEST_CASE("simulate_lcs converges at first order") {
  LinearLcsData d;
  d.A = Mat::Constant(1, 1, -1.0);
  d.B = Mat::Ones(1, 1);
  d.c = Vec::Constant(1, -1.0);
  d.C = Mat::Ones(1, 1);
  d.D = Mat::Ones(1, 1);
  d.q = Vec::Zero(1);
  d.target = Vec::Zero(1);
  const OcpecProblem p = make_linear_lcs(d, 0, 2, Endpoint::fixed_initial(Vec::Ones(1)));
  std::vector<double> err;
  for (int N : {100, 200, 400, 800}) {
    const DiscreteTrajectory tr = simulate_lcs(p, N);
    err.push_back(std::abs(tr.x(0, N) - oracle::slope_closed_form(2.0)));
  }
  for (std::size_t i = 1; i < err.size(); ++i) {
    const double slope = std::log2(err[i - 1] / err[i]);
    CHECK(slope >= 0.8);
    CHECK(slope <= 1.2);
  }
}

TEST_CASE("simulate_lcs rejects the nonlinear kind and names a failing node") {
  CHECK_THROWS_AS(simulate_lcs(make_counterexample(), 10), Error);
  OcpecProblem p = builtin("linear_lcs");
  p.linear->D = -Mat::Ones(1, 1);
  p.linear->q = Vec::Constant(1, -1.0);
  p.linear->C = Mat::Zero(1, 1);
  try {
    simulate_lcs(p, 5);
    FAIL("expected an LCP failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LcpFailure);
    CHECK(std::string(e.what()).find("node 0") != std::string::npos);
  }
}
