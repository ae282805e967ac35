#include "cq_support.hpp"
#include "oracles.hpp"

#include "ocpec/cq.hpp"
#include "ocpec/transcribe.hpp"

#include <doctest.h>

using namespace ocpec;
using detail::VarSign;
using namespace cqsupport;

TEST_CASE("licq agrees with a gram-determinant rank test") {
  std::mt19937_64 rng(101);
  int holds = 0, fails = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const NodeGradients ng = random_family(rng, trial);
    const Mat F = family_oracle(ng);
    CHECK((licq_family(ng).rows() == F.rows()));
    const LicqResult r = mpec_licq(ng);
    CHECK(r.rows == F.rows());
    CHECK(r.holds == oracle::gram_full_row_rank(F));
    if (F.rows() == 0) CHECK(std::isinf(r.min_singular_value));
    (r.holds ? holds : fails)++;
  }
  CHECK(holds > 100);
  CHECK(fails > 100);
}

TEST_CASE("counterexample and linear nodes") {
  std::mt19937_64 rng(3);
  const OcpecProblem ce = make_counterexample();
  const DiscreteTrajectory tc = fixture::constant_trajectory(Vec::Zero(1), Vec::Zero(1), 10);
  const CqVerdict v = audit_node(ce, tc, 5, {}, rng);
  CHECK(v.ok);
  CHECK_FALSE(v.licq.holds);
  CHECK(v.licq.rows == 2);
  CHECK(v.licq.min_singular_value == 0.0);
  CHECK(v.quasi_normality.verdict == QuasiNormality::Inconclusive);
  REQUIRE(v.quasi_normality.witness);
  CHECK(v.quasi_normality.witness->lam_G(0) == doctest::Approx(0.0));
  CHECK(v.quasi_normality.witness->lam_H(0) == doctest::Approx(1.0));
  CHECK(v.quasi_normality.witness_violates_wbcq);
  CHECK(v.quasi_normality.witness_grad_x_norm == doctest::Approx(1.0));
  CHECK(std::isinf(v.kappa.kappa));
  CHECK(std::isinf(v.slope.k_S));
  CHECK_FALSE(v.linear_condition);
  CHECK_FALSE(v.error_bound_certified);

  const std::vector<CqVerdict> all = audit(ce, tc, {}, rng);
  CHECK(all.size() == 11);
  for (const CqVerdict& a : all) CHECK_FALSE(a.licq.holds);

  // x = 1 moves the pair into I0+: LICQ holds and the H row is inactive.
  const DiscreteTrajectory t1 = fixture::constant_trajectory(Vec::Ones(1), Vec::Zero(1), 4);
  const CqVerdict s = audit_node(ce, t1, 2, {}, rng);
  CHECK(s.licq.holds);
  CHECK(s.licq.min_singular_value == doctest::Approx(1.0));
  CHECK(s.quasi_normality.verdict == QuasiNormality::HoldsViaNoMultiplier);
  CHECK(s.kappa.kappa == doctest::Approx(1.0));
  CHECK(s.slope.method == "sampling");
  CHECK(s.slope.samples == 1000);
  CHECK(s.slope.k_H == doctest::Approx(1.0));
  CHECK(s.slope.k_S == doctest::Approx(1.0));

  // Linear kind, G = u and H = x + 2u at x = 1, u = 0: only the G row is active.
  LinearLcsData d;
  d.A = Mat::Zero(1, 1);
  d.B = Mat::Ones(1, 1);
  d.c = Vec::Constant(1, -1.0);
  d.C = Mat::Ones(1, 1);
  d.D = Mat::Constant(1, 1, 2.0);
  d.q = Vec::Zero(1);
  d.target = Vec::Zero(1);
  const OcpecProblem lin = make_linear_lcs(d, 0, 1, Endpoint::fixed_initial(Vec::Ones(1)));
  const CqVerdict w = audit_node(lin, t1, 1, {}, rng);
  CHECK(w.licq.holds);
  CHECK(w.kappa.kappa == doctest::Approx(1.0));
  CHECK(w.slope.method == "operator_norm");
  CHECK(w.slope.k_H == doctest::Approx(1.0));
  CHECK(w.slope.k_S == doctest::Approx(1.0));
  CHECK(w.linear_condition);
  CHECK(w.error_bound_certified);
}

TEST_CASE("abnormal multiplier search agrees with kernel sampling") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> dm(1, 3), dl(1, 2), d1(0, 1), d2(0, 1);
  int planted = 0, inconclusive = 0, holds = 0, found_by_sampling = 0;
  for (int trial = 0; trial < 50; ++trial) {
    NodeGradients ng = random_node(rng, 2, dm(rng), dl(rng), d1(rng), d2(rng), 2);
    if (trial % 2 == 0 && plant_ray(ng, rng)) ++planted;
    const AbnormalResult r = no_abnormal_multiplier(ng);
    const Mat A = abnormal_matrix(ng);
    const bool sampled = sampled_abnormal_ray(ng, rng, 10000);
    if (sampled) {
      ++found_by_sampling;
      CHECK(r.verdict == QuasiNormality::Inconclusive);
    }
    if (r.verdict == QuasiNormality::Inconclusive) {
      ++inconclusive;
      REQUIRE(r.witness);
      const NodeMultipliers& w = *r.witness;
      Vec v(A.cols());
      v << w.lam_g, w.lam_h, w.lam_G, w.lam_H, w.zeta;
      CHECK((A * v).cwiseAbs().maxCoeff() <= 1e-9);
      CHECK(v.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
      CHECK(fits_signs(v, abnormal_signs(ng, r.witness_branch), 1e-12));
    } else {
      ++holds;
      CHECK_FALSE(r.witness);
    }
    CHECK(r.branches_examined >= 1);
  }
  CHECK(planted >= 20);
  CHECK(inconclusive >= planted);
  CHECK(holds >= 5);
  CHECK(found_by_sampling >= 10);
}

TEST_CASE("kappa is finite whenever licq holds") {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> dm(2, 6), dl(0, 2), d1(0, 2), d2(0, 1), dface(-1, 1);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const int m = dm(rng);
    NodeGradients ng = random_node(rng, 2, m, dl(rng), d1(rng), d2(rng), 2);
    if (trial % 2) {
      ng.u_face.assign(static_cast<std::size_t>(m), 0);
      ng.u_face[0] = dface(rng);
    }
    const LicqResult licq = mpec_licq(ng);
    const AbnormalResult qn = no_abnormal_multiplier(ng);
    const KappaResult kap = kappa_estimate(ng, qn);
    CHECK(kap.patterns == (1 << ng.sets.i_00.size()));
    if (licq.holds) {
      ++checked;
      CHECK(qn.verdict == QuasiNormality::HoldsViaNoMultiplier);
      CHECK(std::isfinite(kap.kappa));
      CHECK(kap.kappa >= 0.0);
      // kappa bounds the inverse of the smallest singular value of the family
      if (licq.rows > 0) CHECK(kap.kappa <= 1.0 / licq.min_singular_value * (1 + 1e-9) + 1e-12);
    }
    if (qn.verdict == QuasiNormality::Inconclusive) CHECK(std::isinf(kap.kappa));
  }
  CHECK(checked > 100);
}

TEST_CASE("linear condition follows the affine structure") {
  CHECK(linear_condition(builtin("linear_lcs")));
  CHECK_FALSE(linear_condition(make_counterexample()));
  CHECK(linear_condition(autonomize(builtin("linear_lcs"))) == linear_condition(builtin("linear_lcs")));
  CHECK_FALSE(linear_condition(autonomize(make_counterexample())));
}

TEST_CASE("node_gradients rejects an infeasible pair") {
  const OcpecProblem ce = make_counterexample();
  // G = -u = -1 < 0 is outside the complementarity set.
  const DiscreteTrajectory tr = fixture::constant_trajectory(Vec::Ones(1), Vec::Ones(1), 3);
  CHECK_THROWS_AS(node_gradients(ce, tr, 1, 1e-6), Error);
  std::mt19937_64 rng(1);
  const CqVerdict v = audit_node(ce, tr, 1, {}, rng);
  CHECK_FALSE(v.ok);
  CHECK_FALSE(v.error.empty());
}
