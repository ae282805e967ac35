#include "oracles.hpp"

#include "ocpec/compgeom.hpp"

#include <doctest.h>

#include <numeric>

using namespace ocpec;

namespace {
Vec v(std::initializer_list<double> xs) {
  Vec r(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) r(i++) = x;
  return r;
}
}  // namespace

TEST_CASE("classify_indices partitions the pairs") {
  const IndexSets s = classify_indices(Vec(), v({1, 0, 0}), v({0, 0, 1}), 1e-8);
  CHECK(s.i_plus0 == std::vector<int>{0});
  CHECK(s.i_00 == std::vector<int>{1});
  CHECK(s.i_0plus == std::vector<int>{2});
  CHECK(s.tol_act == 1e-8);

  const IndexSets t = classify_indices(Vec(), v({1e-9}), v({1e-9}), 1e-8);
  CHECK(t.i_00 == std::vector<int>{0});
  // exactly at the tolerance goes to the degenerate set
  CHECK(classify_indices(Vec(), v({1e-8}), v({0}), 1e-8).i_00 == std::vector<int>{0});

  CHECK_THROWS_AS(classify_indices(Vec(), v({-1}), v({0}), 1e-8), Error);

  const IndexSets g = classify_indices(v({-1, -1e-9, 0}), Vec(), Vec(), 1e-8);
  CHECK(g.i_minus == std::vector<int>{0});
  CHECK(g.i_zero == std::vector<int>{1, 2});
}

TEST_CASE("classify_indices covers every index exactly once") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const int l = 1 + trial % 6;
    Vec G(l), H(l);
    for (int i = 0; i < l; ++i) {
      const int c = pick(rng);
      G(i) = c == 0 ? 1.0 : 0.0;
      H(i) = c == 2 ? 1.0 : 0.0;
    }
    const IndexSets s = classify_indices(Vec(), G, H, 1e-6);
    std::vector<int> all;
    for (auto* set : {&s.i_plus0, &s.i_00, &s.i_0plus}) all.insert(all.end(), set->begin(), set->end());
    std::sort(all.begin(), all.end());
    std::vector<int> expect(static_cast<std::size_t>(l));
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
  }
}

TEST_CASE("limiting normal cone examples") {
  CHECK(in_limiting_normal_cone(v({0}), v({0}), v({-1}), v({-1}), 1e-9));
  CHECK_FALSE(in_limiting_normal_cone(v({0}), v({0}), v({1}), v({1}), 1e-9));
  CHECK(in_limiting_normal_cone(v({1}), v({0}), v({0}), v({7}), 1e-9));
  CHECK_FALSE(in_limiting_normal_cone(v({1}), v({0}), v({0.5}), v({0}), 1e-9));
  CHECK(in_limiting_normal_cone(v({0}), v({0}), v({0}), v({5}), 1e-9));
  CHECK_THROWS_AS(in_limiting_normal_cone(v({1}), v({1}), v({0}), v({0}), 1e-9), Error);
}

TEST_CASE("limiting normal cone at a positive a-component needs alpha = 0") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 500; ++i) {
    const double beta = nd(rng);
    const double alpha = (i % 2) ? 0.0 : nd(rng);
    CHECK(in_limiting_normal_cone(v({2.0}), v({0}), v({alpha}), v({beta}), 1e-9) == (alpha == 0.0));
  }
}

TEST_CASE("limiting normal cone is a cone on the negative quadrant") {
  for (double s : {1e-3, 0.5, 1.0, 10.0, 1e4}) {
    CHECK(in_limiting_normal_cone(v({0}), v({0}), v({-0.3 * s}), v({-2.0 * s}), 1e-9));
  }
}

TEST_CASE("limiting normal cone agrees with the proximal-normal oracle") {
  const oracle::ConeOracle cone;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> kind(0, 2);
  const std::pair<double, double> bases[] = {{0, 0}, {1, 0}, {0, 1}};
  for (const auto& [a, b] : bases) {
    for (int i = 0; i < 200; ++i) {
      double alpha = nd(rng), beta = nd(rng);
      const int k = kind(rng);
      if (k == 0) alpha = 0.0;
      if (k == 1) beta = 0.0;
      const bool impl = in_limiting_normal_cone(v({a}), v({b}), v({alpha}), v({beta}), 1e-9);
      CHECK(impl == cone.member(a, b, alpha, beta, 1e-9));
    }
  }
}

TEST_CASE("project_C examples and brute force") {
  Projection p = project_C(v({1}), v({1}));
  CHECK(p.distance == doctest::Approx(1.0));
  CHECK(p.a(0) * p.b(0) == 0.0);
  p = project_C(v({-1}), v({-1}));
  CHECK(p.a(0) == 0.0);
  CHECK(p.b(0) == 0.0);
  CHECK(p.distance == doctest::Approx(std::sqrt(2.0)));
  p = project_C(v({2}), v({0}));
  CHECK(p.distance == 0.0);
  CHECK(p.a(0) == 2.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(-3, 3);
  for (int i = 0; i < 1000; ++i) {
    const double a = ud(rng), b = ud(rng);
    // dense grid over both rays of C^1 (extent covers any nearest point)
    double best = std::hypot(a, b);
    for (int k = 0; k <= 3000; ++k) {
      const double s = 3.0 * k / 3000.0;
      best = std::min({best, std::hypot(a - s, b), std::hypot(a, b - s)});
    }
    // refine around the analytic candidates to remove grid error
    best = std::min({best, std::hypot(std::min(a, 0.0), b), std::hypot(a, std::min(b, 0.0))});
    const Projection q = project_C(v({a}), v({b}));
    CHECK(std::abs(q.distance - best) <= 1e-9);
    const Projection q2 = project_C(q.a, q.b);
    CHECK(q2.distance == 0.0);
    CHECK(q2.a(0) == q.a(0));
    CHECK(q2.b(0) == q.b(0));
  }
}

TEST_CASE("sign_class examples") {
  SignClass c = sign_class(1, 1, 1e-8);
  CHECK((c.w && c.c && c.m && c.s));
  c = sign_class(-1, -1, 1e-8);
  CHECK((c.w && c.c));
  CHECK_FALSE(c.m);
  CHECK_FALSE(c.s);
  c = sign_class(-1, 0, 1e-8);
  CHECK((c.w && c.c && c.m));
  CHECK_FALSE(c.s);
  CHECK(strongest(sign_class(-1, 0, 1e-8)) == Stationarity::M);
  CHECK(strongest(sign_class(-0.5, 1, 1e-8)) == Stationarity::W);
  CHECK(strongest(sign_class(0, 0, 1e-8)) == Stationarity::S);
}

TEST_CASE("sign_class lattice over random pairs") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> mode(0, 3);
  int violations = 0;
  for (int i = 0; i < 100000; ++i) {
    double mu = nd(rng), nu = nd(rng);
    switch (mode(rng)) {
      case 0: mu = 0.0; break;
      case 1: nu *= 1e-9; break;
      case 2: mu *= 1e-8; nu *= 1e-8; break;
      default: break;
    }
    const SignClass c = sign_class(mu, nu, 1e-8);
    if ((c.s && !c.m) || (c.m && !c.c) || (c.c && !c.w)) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("stationarity names round-trip") {
  for (Stationarity s : {Stationarity::Failed, Stationarity::W, Stationarity::C, Stationarity::M, Stationarity::S}) {
    CHECK(parse_stationarity(to_string(s)) == s);
  }
}
