#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "epikit/integrand.hpp"

using namespace epikit;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::ArrayXXd random_table(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  Eigen::ArrayXXd t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = u(rng);
  return t;
}

DiscreteMeasure random_measure(const MetricGrid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::ArrayXd w(static_cast<Eigen::Index>(g.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = u(rng);
  w /= w.sum();
  return DiscreteMeasure::from_dense(g, w);
}

}  // namespace

TEST_CASE("tabulated integrands reject NaN") {
  Eigen::ArrayXXd t = Eigen::ArrayXXd::Zero(2, 2);
  t(1, 0) = std::nan("");
  CHECK_THROWS_AS(Integrand{t}, std::invalid_argument);
}

TEST_CASE("expectation examples") {
  const auto xi = MetricGrid::uniform_1d(1.0, 3.0, 3);
  Eigen::ArrayXXd t(3, 1);
  t << 1.0, 2.0, 3.0;
  const Integrand f(t);
  CHECK(expectation(f, DiscreteMeasure::dirac(xi, 1), 0).value() == 2.0);
  CHECK(expectation(f, DiscreteMeasure::uniform(xi, {0, 1, 2}), 0).value() == doctest::Approx(2.0));

  Eigen::ArrayXXd s(3, 1);
  s << kInf, -kInf, 0.0;
  const Integrand g(s);
  CHECK(expectation(g, DiscreteMeasure(xi, {0, 1}, {0.5, 0.5}), 0).is_plus_inf());
  // Zero-weight atoms never contribute, even when infinite.
  CHECK(expectation(g, DiscreteMeasure(xi, {0, 1, 2}, {0.0, 0.0, 1.0}), 0).value() == 0.0);
  CHECK(expectation(g, DiscreteMeasure(xi, {1, 2}, {0.5, 0.5}), 0).is_minus_inf());
}

TEST_CASE("expectation is affine in the measure") {
  std::mt19937_64 rng(21);
  const auto xi = MetricGrid::uniform_1d(0.0, 1.0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    const Integrand f(random_table(9, 4, rng));
    const auto p = random_measure(xi, rng);
    const auto q = random_measure(xi, rng);
    const double t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto m = DiscreteMeasure::mixture(p, q, t);
    for (Index x = 0; x < 4; ++x) {
      const double lhs = expectation(f, m, x).value();
      const double rhs = (1 - t) * expectation(f, p, x).value() + t * expectation(f, q, x).value();
      CHECK(std::abs(lhs - rhs) <= 1e-9);
    }
  }
}

TEST_CASE("tail expectations") {
  const auto xi = MetricGrid::uniform_1d(0.0, 1.0, 5);
  Eigen::ArrayXXd t = Eigen::ArrayXXd::Zero(5, 1);
  t(1, 0) = -10.0;
  const Integrand f(t);
  const auto p = DiscreteMeasure(xi, {0, 1, 2, 3, 4}, {0.2, 0.2, 0.2, 0.2, 0.2});
  CHECK(tail_expectation_below(f, p, 0, 5.0).value() == doctest::Approx(-2.0));
  CHECK(tail_expectation_below(f, p, 0, 11.0).value() == 0.0);
  CHECK(tail_expectation_above(f, p, 0, 1.0).value() == 0.0);

  std::mt19937_64 rng(4);
  const std::vector<double> ks{0.5, 1.0, 2.0, 3.0, 4.0, 8.0};
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::ArrayXXd r = random_table(5, 3, rng);
    if (trial % 5 == 0) r(trial % 5, 1) = -kInf;
    const Integrand g(r);
    const auto m = random_measure(xi, rng);
    for (Index x = 0; x < 3; ++x) {
      ExtReal prev = ExtReal::minus_inf();
      for (double K : ks) {
        // Oracle: enumerate atoms directly.
        double oracle = 0.0;
        bool minus_inf = false;
        for (std::size_t a = 0; a < m.support().size(); ++a) {
          const double v = r(static_cast<Eigen::Index>(m.support()[a]), static_cast<Eigen::Index>(x));
          if (v <= -K) {
            if (std::isinf(v)) minus_inf = true;
            else oracle += m.weights()[a] * v;
          }
        }
        const ExtReal got = tail_expectation_below(g, m, x, K);
        if (minus_inf) CHECK(got.is_minus_inf());
        else CHECK(got.value() == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(got <= ExtReal(0.0));
        CHECK(got >= prev);  // nondecreasing in K
        prev = got;
      }
    }
  }
}

TEST_CASE("lower regularization") {
  const auto g = MetricGrid::uniform_1d(-1.0, 1.0, 5);
  GridFunction ind = GridFunction::Zero(5);
  ind(2) = 1.0;
  const std::vector<double> fine{0.25, 0.1};
  CHECK((lower_regularize(ind, g, fine) == ind).all());
  const auto coarse = lower_regularize(ind, g, {0.5});
  CHECK(coarse(2) == 0.0);

  std::mt19937_64 rng(8);
  const auto h = MetricGrid::uniform_1d(0.0, 1.0, 40);
  for (int trial = 0; trial < 50; ++trial) {
    GridFunction v = random_table(40, 1, rng).col(0);
    v(trial % 40) = kInf;
    const auto radii = default_regularization_radii(h);
    const auto once = lower_regularize(v, h, radii);
    CHECK((once <= v).all());
    CHECK((lower_regularize(once, h, radii) == once).all());
    CHECK(check_lsc(v, h, radii).verdict == Verdict::pass);
    const std::vector<double> wide{0.1, 0.05};
    CHECK((lower_regularize(v, h, wide) <= v).all());
  }
  // Lipschitz functions are fixed points up to one grid modulus.
  GridFunction lip = Eigen::ArrayXd::LinSpaced(40, 0.0, 1.0).sin();
  const auto lr = lower_regularize(lip, h, {h.spacing(), 0.5 * h.min_separation()});
  CHECK(((lr - lip).abs() <= h.spacing() + 1e-12).all());
}

TEST_CASE("lsc check flags an upward jump seen by a coarse schedule") {
  const auto g = MetricGrid::uniform_1d(-1.0, 1.0, 21);
  GridFunction h = GridFunction::Zero(21);
  h(10) = 1.0;
  CHECK(check_lsc(h, g, {0.25, 0.15}).verdict == Verdict::fail);
  CHECK(check_lsc(h, g, {0.05}).verdict == Verdict::pass);
}

TEST_CASE("equi-lower-semicontinuity") {
  const auto xi = MetricGrid::uniform_1d(-1.0, 1.0, 21);  // spacing 0.1
  const Index zero = 10;
  const std::vector<double> eps{0.5, 0.25};
  const std::vector<double> deltas{0.5, 0.25};
  SUBCASE("constant family") {
    std::vector<GridFunction> fs(8, Eigen::ArrayXd::LinSpaced(21, -1.0, 1.0).abs());
    CHECK(check_equi_lsc(fs, xi, {zero, 3}, eps, deltas, 4).verdict == Verdict::pass);
  }
  SUBCASE("spikes rising towards the atom") {
    // f^nu(z) = 1{z <= 1/nu}: the value 1 at 0 has zeros at distance 1/nu,
    // inside every scheduled delta eventually.
    std::vector<GridFunction> fs;
    for (int nu = 1; nu <= 8; ++nu) {
      GridFunction f(21);
      for (Index i = 0; i < 21; ++i) f(static_cast<Eigen::Index>(i)) = xi.coord(i) <= 1.0 / nu + 1e-12 ? 1.0 : 0.0;
      fs.push_back(f);
    }
    const auto r = check_equi_lsc(fs, xi, {zero}, eps, deltas, 4);
    CHECK(r.verdict == Verdict::fail);
    CHECK_FALSE(r.witnesses.empty());
  }
  SUBCASE("steps switching on to the right") {
    // f^nu(z) = 1{z >= 1/nu} vanishes at 0 and nearby values only go up.
    std::vector<GridFunction> fs;
    for (int nu = 1; nu <= 8; ++nu) {
      GridFunction f(21);
      for (Index i = 0; i < 21; ++i) f(static_cast<Eigen::Index>(i)) = xi.coord(i) >= 1.0 / nu - 1e-12 ? 1.0 : 0.0;
      fs.push_back(f);
    }
    CHECK(check_equi_lsc(fs, xi, {zero}, eps, deltas, 4).verdict == Verdict::pass);
  }
}

TEST_CASE("semiconvergence in probability") {
  std::mt19937_64 rng(2);
  const auto xi = MetricGrid::uniform_1d(0.0, 1.0, 6);
  const Integrand f(random_table(6, 3, rng));
  const auto p = random_measure(xi, rng);
  const double eps = 0.1;
  IntegrandSequence same{std::vector<Integrand>(10, f), f};
  for (double v : semiconvergence_in_probability(same, p, 1, eps, Direction::below)) CHECK(v == 0.0);
  for (double v : semiconvergence_in_probability(same, p, 1, eps, Direction::above)) CHECK(v == 0.0);

  Eigen::ArrayXXd t = f.table();
  t(2, 1) -= 2 * eps;
  IntegrandSequence stuck{std::vector<Integrand>(10, Integrand(t)), f};
  for (double v : semiconvergence_in_probability(stuck, p, 1, eps, Direction::below))
    CHECK(v == doctest::Approx(p.mass_at(2)));

  IntegrandSequence rising{{}, f};
  for (int nu = 1; nu <= 30; ++nu) rising.items.emplace_back(f.table() - 1.0 / nu);
  const auto tr = semiconvergence_in_probability(rising, p, 0, eps, Direction::below);
  CHECK(tr.front() == doctest::Approx(1.0));
  CHECK(tr.back() == 0.0);
}

TEST_CASE("minorant condition") {
  const auto xg = MetricGrid::uniform_1d(-1.0, 1.0, 9);
  const auto xi = MetricGrid::uniform_1d(0.0, 1.0, 5);
  const auto p = DiscreteMeasure::uniform(xi, {0, 1, 2, 3, 4});
  const Index n = 12;
  const auto limits = default_limit_schedule(n, xg, xi);

  SUBCASE("nonnegative integrands with zero minorant") {
    IntegrandSequence fs{std::vector<Integrand>(n, Integrand(Eigen::ArrayXXd::Ones(5, 9))),
                         Integrand(Eigen::ArrayXXd::Ones(5, 9))};
    std::vector<GridFunction> gs(n, GridFunction::Zero(5));
    std::vector<DiscreteMeasure> ps(n, p);
    MinorantInputs in{&fs, &gs, &ps, &p, &xg, 4, 0.5, limits};
    const auto r = check_minorant_condition(in);
    CHECK(r.verdict == Verdict::pass);
    CHECK(r.stage("pointwise_minorant")->margin.value() == 0.0);
  }
  SUBCASE("constant negative minorant") {
    const double c = 2.0;
    IntegrandSequence fs{std::vector<Integrand>(n, Integrand(Eigen::ArrayXXd::Constant(5, 9, -c))),
                         Integrand(Eigen::ArrayXXd::Constant(5, 9, -c))};
    std::vector<GridFunction> gs(n, GridFunction::Constant(5, -c));
    std::vector<DiscreteMeasure> ps(n, p);
    MinorantInputs in{&fs, &gs, &ps, &p, &xg, 4, 0.5, limits};
    const auto r = check_minorant_condition(in);
    CHECK(r.verdict == Verdict::pass);
    // Both sides of the integrated condition equal -c.
    CHECK(r.stage("integrated_minorant")->lhs.value() == doctest::Approx(-c));
  }
  SUBCASE("escaping mass breaks the integrated condition") {
    // P^nu puts 1/nu on the last atom where f^nu = g^nu = -nu.
    std::vector<DiscreteMeasure> ps;
    std::vector<GridFunction> gs;
    IntegrandSequence fs{{}, Integrand(Eigen::ArrayXXd::Zero(5, 9))};
    const auto p0 = DiscreteMeasure::dirac(xi, 0);
    for (Index k = 0; k < n; ++k) {
      const double nu = static_cast<double>(k + 1);
      Eigen::ArrayXXd t = Eigen::ArrayXXd::Zero(5, 9);
      t.row(4).setConstant(-nu * nu);
      fs.items.emplace_back(t);
      GridFunction g = GridFunction::Zero(5);
      g(4) = -nu * nu;
      gs.push_back(g);
      ps.push_back(k == 0 ? p0 : DiscreteMeasure(xi, {0, 4}, {1.0 - 1.0 / nu, 1.0 / nu}));
    }
    MinorantInputs in{&fs, &gs, &ps, &p0, &xg, 4, 0.5, limits};
    const auto r = check_minorant_condition(in);
    CHECK(r.stage_passed("pointwise_minorant"));
    CHECK_FALSE(r.stage_passed("integrated_minorant"));
    CHECK(r.verdict == Verdict::fail);
  }
}

TEST_CASE("joint limits and divergence trends") {
  const auto g = MetricGrid::uniform_1d(0.0, 1.0, 11);
  std::vector<GridFunction> vals;
  for (int nu = 1; nu <= 8; ++nu) vals.push_back(Eigen::ArrayXd::LinSpaced(11, 0.0, 1.0) + 1.0 / nu);
  const auto radii = shrinking_radii(8, g);
  CHECK(joint_liminf(vals, g, 5, radii, 6).value() == doctest::Approx(0.5 + 1.0 / 8));
  CHECK(joint_limsup(vals, g, 5, radii, 6).value() == doctest::Approx(0.5 + 1.0 / 7));
  const auto wide = std::vector<double>(8, 0.1 + 1e-12);
  CHECK(joint_liminf(vals, g, 5, wide, 6).value() == doctest::Approx(0.4 + 1.0 / 8));

  std::vector<ExtReal> up{1, 2, 3, 4, 5, 6};
  CHECK(diverges_up(up, 2));
  std::vector<ExtReal> flat{1, 1, 1, 1};
  CHECK_FALSE(diverges_up(flat, 0));
  std::vector<ExtReal> down{-1, -2, -3, -4, -5};
  CHECK(diverges_down(down, 1));
  std::vector<ExtReal> conv{1.0, 0.5, 1.0 / 3, 0.25, 0.2};
  CHECK_FALSE(diverges_down(conv, 0));
}

TEST_CASE("integrand JSON round trip keeps infinities") {
  Eigen::ArrayXXd t(2, 2);
  t << 1.0, kInf, -kInf, 0.5;
  const Integrand f(t);
  const auto j = to_json(f);
  CHECK(j[0][1] == "+inf");
  const Integrand f2 = integrand_from_json(j);
  CHECK((f2.table() == t).all());
  CHECK_THROWS_AS(integrand_from_json(nlohmann::json::parse("[[1,2],[3]]")), std::invalid_argument);
}
