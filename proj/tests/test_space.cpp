#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "epikit/space.hpp"

using namespace epikit;

namespace {

DiscreteMeasure random_measure(const MetricGrid& g, std::mt19937_64& rng, double zero_prob = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::ArrayXd w(static_cast<Eigen::Index>(g.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = u(rng) < zero_prob ? 0.0 : u(rng);
  if (w.sum() == 0.0) w(0) = 1.0;
  w /= w.sum();
  return DiscreteMeasure::from_dense(g, w);
}

// W1 on a sorted line: integral of |F_p - F_q|.
double cdf_oracle(const MetricGrid& g, const Eigen::ArrayXd& p, const Eigen::ArrayXd& q) {
  double fp = 0.0, fq = 0.0, total = 0.0;
  for (Index i = 0; i + 1 < g.size(); ++i) {
    fp += p(static_cast<Eigen::Index>(i));
    fq += q(static_cast<Eigen::Index>(i));
    total += std::abs(fp - fq) * (g.coord(i + 1) - g.coord(i));
  }
  return total;
}

void check_witness(const DiscreteMeasure& p, const DiscreteMeasure& q, const BoundedLipschitzResult& r) {
  const MetricGrid& g = p.grid();
  const Eigen::ArrayXd diff = p.dense() - q.dense();
  CHECK((r.witness.abs() <= 1.0 + 1e-12).all());
  for (Index i = 0; i < g.size(); ++i)
    for (Index j = 0; j < g.size(); ++j)
      REQUIRE(std::abs(r.witness(static_cast<Eigen::Index>(i)) - r.witness(static_cast<Eigen::Index>(j))) <=
              g.distance(i, j) + 1e-12);
  CHECK((r.witness * diff).sum() == doctest::Approx(r.value).epsilon(1e-9));
}

}  // namespace

TEST_CASE("grid construction and balls") {
  const auto g = MetricGrid::uniform_1d(-1.0, 1.0, 5);
  CHECK(g.size() == 5);
  CHECK(g.is_sorted_1d());
  CHECK(g.spacing() == doctest::Approx(0.5));
  CHECK(g.coord(4) == 1.0);
  CHECK(g.ball(2, 0.5) == std::vector<Index>{1, 2, 3});
  CHECK(g.open_ball(2, 0.5) == std::vector<Index>{2});
  CHECK(g.ball(0, 0.1) == std::vector<Index>{0});

  Eigen::MatrixXd bad(3, 3);
  bad << 0, 1, 5, 1, 0, 1, 5, 1, 0;  // violates the triangle inequality
  CHECK_THROWS_AS(MetricGrid::from_matrix(bad), std::invalid_argument);
  Eigen::MatrixXd asym(2, 2);
  asym << 0, 1, 2, 0;
  CHECK_THROWS_AS(MetricGrid::from_matrix(asym), std::invalid_argument);
  Eigen::MatrixXd dup(2, 1);
  dup << 0.0, 0.0;
  CHECK_THROWS_AS(MetricGrid::euclidean(dup), std::invalid_argument);
}

TEST_CASE("measure validation") {
  const auto g = MetricGrid::uniform_1d(0.0, 1.0, 3);
  CHECK_THROWS_AS(DiscreteMeasure(g, {0, 0}, {0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(DiscreteMeasure(g, {0, 5}, {0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(DiscreteMeasure(g, {0, 1}, {0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(DiscreteMeasure(g, {0, 1}, {-0.5, 1.5}), std::invalid_argument);
  const auto m = DiscreteMeasure::from_counts(g, {1, 0, 3});
  CHECK(m.mass_at(2) == doctest::Approx(0.75));
  CHECK(m.support() == std::vector<Index>{0, 2});
}

TEST_CASE("bounded-Lipschitz distance on two points is min(d, 2)") {
  for (double d : {0.3, 1.0, 1.99, 2.0, 5.0}) {
    Eigen::MatrixXd c(2, 1);
    c << 0.0, d;
    const auto g = MetricGrid::euclidean(c);
    const auto p = DiscreteMeasure::dirac(g, 0);
    const auto q = DiscreteMeasure::dirac(g, 1);
    const auto r = bounded_lipschitz(p, q);
    CHECK(r.value == doctest::Approx(std::min(d, 2.0)));
    check_witness(p, q, r);
    CHECK(bounded_lipschitz_distance(p, p) == 0.0);
  }
}

TEST_CASE("bounded-Lipschitz equals the line CDF formula when the diameter is at most 2") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 12);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<double> xs(n);
    for (auto& x : xs) x = u(rng);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    Eigen::MatrixXd c(static_cast<Eigen::Index>(xs.size()), 1);
    for (Index i = 0; i < xs.size(); ++i) c(static_cast<Eigen::Index>(i), 0) = xs[i];
    const auto g = MetricGrid::euclidean(c);
    const auto p = random_measure(g, rng);
    const auto q = random_measure(g, rng);
    const auto r = bounded_lipschitz(p, q);
    REQUIRE(r.value == doctest::Approx(cdf_oracle(g, p.dense(), q.dense())).epsilon(1e-9));
    CHECK(wasserstein1_1d(p, q) == doctest::Approx(r.value).epsilon(1e-9));
    check_witness(p, q, r);
  }
}

TEST_CASE("bounded-Lipschitz equals total variation when all points are 2 apart") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 6);
    Eigen::MatrixXd c(static_cast<Eigen::Index>(n), 1);
    for (Index i = 0; i < n; ++i) c(static_cast<Eigen::Index>(i), 0) = 3.0 * static_cast<double>(i);
    const auto g = MetricGrid::euclidean(c);
    const auto p = random_measure(g, rng);
    const auto q = random_measure(g, rng);
    const double tv_oracle = (p.dense() - q.dense()).abs().sum();
    const auto r = bounded_lipschitz(p, q);
    CHECK(r.value == doctest::Approx(tv_oracle).epsilon(1e-9));
    check_witness(p, q, r);
  }
}

TEST_CASE("bounded-Lipschitz metric axioms on random planar triples") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0.0, 1.5);
  Eigen::MatrixXd c(12, 2);
  for (Eigen::Index i = 0; i < c.rows(); ++i) c.row(i) << nd(rng), nd(rng);
  const auto g = MetricGrid::euclidean(c);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_measure(g, rng);
    const auto b = random_measure(g, rng);
    const auto e = random_measure(g, rng);
    const auto rab = bounded_lipschitz(a, b);
    const double dab = rab.value;
    const double dba = bounded_lipschitz_distance(b, a);
    CHECK(dab == doctest::Approx(dba).epsilon(1e-12));
    CHECK(dab >= 0.0);
    CHECK(dab <= bounded_lipschitz_distance(a, e) + bounded_lipschitz_distance(e, b) + 1e-9);
    check_witness(a, b, rab);
  }
}

TEST_CASE("empirical measures approach the law in median") {
  const auto g = MetricGrid::uniform_1d(0.0, 1.0, 11);
  Eigen::ArrayXd w = Eigen::ArrayXd::LinSpaced(11, 1.0, 3.0);
  w /= w.sum();
  const auto p = DiscreteMeasure::from_dense(g, w);
  std::vector<double> medians;
  for (Index n : {10, 100, 1000}) {
    std::vector<double> d;
    for (int seed = 1; seed <= 15; ++seed) {
      std::mt19937_64 rng(static_cast<unsigned>(seed * 1000 + static_cast<int>(n)));
      std::discrete_distribution<Index> draw(w.data(), w.data() + w.size());
      std::vector<Index> sample(n);
      for (auto& s : sample) s = draw(rng);
      d.push_back(bounded_lipschitz_distance(DiscreteMeasure::empirical(g, sample), p));
    }
    std::nth_element(d.begin(), d.begin() + 7, d.end());
    medians.push_back(d[7]);
  }
  CHECK(medians[0] > medians[1]);
  CHECK(medians[1] > medians[2]);
}

TEST_CASE("mollifier family") {
  const auto g = MetricGrid::uniform_1d(-1.0, 1.0, 5);
  const auto fam = mollifier_family(g, 2, {1.0, 0.5, 0.1});
  CHECK(fam[0].support().size() == 5);
  CHECK(fam[1].support().size() == 3);
  CHECK(fam[2].support() == std::vector<Index>{2});
  const auto delta = DiscreteMeasure::dirac(g, 2);
  for (std::size_t k = 0; k < fam.size(); ++k)
    CHECK(bounded_lipschitz_distance(fam[k], delta) <= std::vector<double>{1.0, 0.5, 0.1}[k] + 1e-12);
  CHECK_THROWS_AS(mollifier_family(g, 2, {0.5, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(mollifier_family(g, 2, {0.0}), std::invalid_argument);
}

TEST_CASE("set limits") {
  const auto g = MetricGrid::uniform_1d(0.0, 1.0, 11);
  SUBCASE("constant sequence") {
    PointSetSequence s{g, std::vector<std::vector<Index>>(8, {2, 3, 7})};
    const auto sc = default_set_limit_schedule(s);
    CHECK(inner_limit(s, sc) == std::vector<Index>{2, 3, 7});
    CHECK(outer_limit(s, sc) == std::vector<Index>{2, 3, 7});
    CHECK(set_converges(s, {2, 3, 7}, sc).verdict == Verdict::pass);
  }
  SUBCASE("alternating sequence") {
    PointSetSequence s{g, {}};
    for (int k = 0; k < 10; ++k) s.sets.push_back(k % 2 == 0 ? std::vector<Index>{1} : std::vector<Index>{8});
    const auto sc = default_set_limit_schedule(s);
    CHECK(outer_limit(s, sc) == std::vector<Index>{1, 8});
    CHECK(inner_limit(s, sc).empty());
    const auto r = set_converges(s, {1, 8}, sc);
    CHECK(r.verdict == Verdict::fail);
    CHECK_FALSE(r.witnesses.empty());
  }
  SUBCASE("shrinking neighbourhoods of a closed set") {
    // A = [0.3, 0.5]; sets[nu] = grid points within 1/nu of A.
    const double lo = 0.3, hi = 0.5;
    PointSetSequence s{g, {}};
    for (int nu = 1; nu <= 40; ++nu) {
      std::vector<Index> set;
      for (Index i = 0; i < g.size(); ++i) {
        const double x = g.coord(i);
        const double d = x < lo ? lo - x : (x > hi ? x - hi : 0.0);
        if (d <= 1.0 / nu + 1e-12) set.push_back(i);
      }
      s.sets.push_back(set);
    }
    std::vector<Index> oracle;
    for (Index i = 0; i < g.size(); ++i)
      if (g.coord(i) >= lo - 1e-12 && g.coord(i) <= hi + 1e-12) oracle.push_back(i);
    CHECK(oracle == std::vector<Index>{3, 4, 5});
    const auto sc = default_set_limit_schedule(s);
    CHECK(set_converges(s, oracle, sc).verdict == Verdict::pass);
  }
  SUBCASE("inner limit is inside the outer limit") {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
      PointSetSequence s{g, {}};
      for (int nu = 0; nu < 12; ++nu) {
        std::vector<Index> set;
        for (Index i = 0; i < g.size(); ++i)
          if (rng() % 3 == 0) set.push_back(i);
        s.sets.push_back(set);
      }
      const auto sc = default_set_limit_schedule(s);
      const auto in = inner_limit(s, sc);
      const auto out = outer_limit(s, sc);
      CHECK(std::includes(out.begin(), out.end(), in.begin(), in.end()));
    }
  }
}

TEST_CASE("grid and measure JSON round trip") {
  Eigen::MatrixXd dm(3, 3);
  dm << 0, 1, 2, 1, 0, 1, 2, 1, 0;
  const auto g = MetricGrid::from_matrix(dm);
  const auto g2 = grid_from_json(to_json(g));
  CHECK(g2.size() == 3);
  CHECK(g2.distance(0, 2) == 2.0);
  const auto m = DiscreteMeasure(g2, {0, 2}, {0.25, 0.75});
  const auto m2 = measure_from_json(to_json(m), g2);
  CHECK(m2.mass_at(2) == 0.75);
  const auto u = MetricGrid::uniform_1d(0.0, 1.0, 4);
  CHECK(grid_from_json(to_json(u)).is_sorted_1d());
}
