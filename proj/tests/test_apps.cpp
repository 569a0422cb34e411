#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "doctest.h"
#include "epikit/apps.hpp"
#include "epikit/config.hpp"
#include "epikit/parallel.hpp"

using namespace epikit;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string pointer_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.pointer();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("number formatting: infinities as tokens, shortest round trip otherwise") {
  CHECK(format_number(kInf) == "+inf");
  CHECK(format_number(-kInf) == "-inf");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(64.0) == "64");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    CHECK(std::stod(format_number(x)) == x);
  }
  CHECK_THROWS(format_number(std::nan("")));

  const std::string csv = trace_csv({{1, 0.5, kInf, 0, -kInf, 0.25}, {2, 0, 0, 0, 0, 0}});
  CHECK(csv == "nu,estimate,value,violation,epi_distance,d_P\n1,0.5,+inf,0,-inf,0.25\n2,0,0,0,0,0\n");
  CHECK(csv.find('\r') == std::string::npos);
}

TEST_CASE("multinomial counts: totals, determinism, streams, empty cells") {
  const std::vector<double> w = {0.25, 0.0, 0.5, 0.25};
  const auto a = sample_counts(w, 1000000, 7, 1);
  std::size_t total = 0;
  for (auto c : a) total += c;
  CHECK(total == 1000000);
  CHECK(a[1] == 0);
  CHECK(a == sample_counts(w, 1000000, 7, 1));
  CHECK(a != sample_counts(w, 1000000, 7, 2));
  CHECK(a != sample_counts(w, 1000000, 8, 1));
  // Binomial(1e6, 1/2) has standard deviation 500.
  CHECK(std::abs(static_cast<double>(a[2]) - 500000.0) < 3000.0);
  CHECK(sample_counts({1.0}, 42, 1, 1) == std::vector<std::size_t>{42});
  CHECK_THROWS(sample_counts({0.0, 0.0}, 10, 1, 1));
  CHECK_THROWS(sample_counts({-0.5, 1.5}, 10, 1, 1));
}

TEST_CASE("histogram MLE is the bin mass over the bin width") {
  const auto g = MetricGrid::uniform_1d(0.125, 0.875, 4);
  const auto u = DiscreteMeasure::uniform(g, {0, 1, 2, 3});
  CHECK((histogram_mle(u, 2) == 1.0).all());
  const auto d = DiscreteMeasure::dirac(g, 0);
  const auto h = histogram_mle(d, 2);
  CHECK(h(0) == 2.0);
  CHECK(h(1) == 2.0);
  CHECK(h(2) == 0.0);
  CHECK(h(3) == 0.0);
  CHECK(histogram_mle(d, 4)(0) == 4.0);
  // Unequal bins: 3 bins over 4 cells group cells as {0, 1}, {2}, {3}.
  const auto h3 = histogram_mle(u, 3);
  CHECK(h3(0) == doctest::Approx(1.0));
  CHECK(h3(2) == doctest::Approx(1.0));
  CHECK_THROWS(histogram_mle(u, 0));
  CHECK_THROWS(histogram_mle(u, 5));
}

TEST_CASE("sieve: true density in the first sieve without noise is recovered exactly") {
  SieveProblem p;
  p.density = "uniform";
  p.exact_measures = true;
  const auto run = run_sieve(p);
  REQUIRE(run.trace.size() == p.sample_sizes.size());
  for (const auto& row : run.trace) {
    CHECK(row.estimate == 0.0);
    CHECK(row.d_p == 0.0);
    CHECK(row.violation == 0.0);
  }
  CHECK(run.report.verdict == Verdict::pass);
}

TEST_CASE("sieve: ramp density passes on the default seed and a frozen sieve is flagged") {
  const auto run = run_sieve(SieveProblem{});
  CHECK(run.report.verdict == Verdict::pass);
  CHECK(run.report.stage_passed("sieve_set_convergence"));
  CHECK(run.report.stage_passed("weak_rate"));
  CHECK(run.trace.back().estimate < run.trace.front().estimate);
  // Every density in the function grid integrates to 1.
  for (Index y = 0; y < run.scheme.x_grid.size(); ++y) {
    const auto col = run.scheme.integrands.limit.column(y);
    CHECK((-col).exp().mean() == doctest::Approx(1.0).epsilon(1e-9));
  }

  SieveProblem frozen;
  frozen.bins.assign(frozen.sample_sizes.size(), 1);
  const auto f = run_sieve(frozen);
  CHECK_FALSE(f.report.stage_passed("sieve_set_convergence"));
  CHECK(f.report.verdict != Verdict::pass);

  SieveProblem bad;
  bad.bins = {0, 1, 1, 1, 1, 1, 1};
  CHECK_THROWS(run_sieve(bad));
}

TEST_CASE("mollifier: continuous g keeps the minimizer, the step converges to 0, two wells") {
  MollifierProblem q;
  q.g = "quadratic";
  const auto rq = run_mollifier(q);
  for (const auto& row : rq.trace) CHECK(row.estimate == 0.0);
  CHECK(rq.report.verdict == Verdict::pass);

  const auto rs = run_mollifier(MollifierProblem{});
  const double dx = 2.0 / 512.0;
  CHECK(std::abs(rs.trace[9].estimate) <= 2.0 * dx);
  CHECK(rs.trace[9].value <= 1e-3);
  CHECK(rs.report.verdict == Verdict::pass);
  CHECK(rs.report.stage_passed("approximations_liminf"));
  // Early mollifiers push the minimizer to the left of the jump.
  CHECK(rs.trace[0].estimate < 0.0);

  MollifierProblem w;
  w.g = "double_well";
  const auto rw = run_mollifier(w);
  CHECK(std::abs(std::abs(rw.trace.back().estimate) - 0.5) <= 2.0 * dx);
  CHECK(rw.report.stage_passed("minimizer/argmin_cluster"));

  MollifierProblem biased;
  biased.g = "quadratic";
  biased.bias = 50.0;
  CHECK_FALSE(run_mollifier(biased).report.stage_passed("domination_and_convergence"));
}

TEST_CASE("two-point solver: boundary values, zero source, analytic order") {
  const auto u = solve_two_point(1.0, 0.5, 16);
  CHECK(u(0) == 0.0);
  CHECK(u(16) == -0.5);
  CHECK((solve_two_point(0.0, 0.0, 8) == 0.0).all());
  // The control enters through the lift -xi x t, which the scheme reproduces exactly.
  const auto lifted = solve_two_point(1.5, 2.0, 10) - solve_two_point(1.5, 0.0, 10);
  for (int i = 0; i <= 10; ++i) CHECK(lifted(i) == doctest::Approx(-0.3 * i).epsilon(1e-12));
  CHECK(observed_orders({8, 16}, {0.0, 0.0})[0] == kInf);

  const std::vector<std::size_t> meshes = {8, 16, 32, 64};
  const auto errs = analytic_errors(meshes);
  for (double o : observed_orders(meshes, errs)) CHECK(o >= 1.9);
  const auto exact = observed_orders({10, 20, 40}, {1.0, 0.25, 0.0625});
  CHECK(exact[0] == doctest::Approx(2.0));
  CHECK(exact[1] == doctest::Approx(2.0));
  CHECK_THROWS(solve_two_point(1.0, 0.0, 1));
}

TEST_CASE("pde app: zero source, default pipeline, closed-form minimizer") {
  PdeProblem zero;
  zero.xi_atoms = {0.0};
  zero.xi_weights = {1.0};
  const auto rz = run_pde(zero);
  for (const auto& row : rz.trace) {
    CHECK(row.estimate == 0.0);
    CHECK(row.value == 0.0);
  }

  const auto r = run_pde(PdeProblem{});
  CHECK(r.report.verdict == Verdict::pass);
  CHECK(r.report.stage_passed("analytic_order"));
  CHECK(r.report.stage_passed("epi_distance_decreasing"));
  const double x_star = r.report.detail["closed_form_minimizer"].get<double>();
  CHECK(std::abs(r.trace.back().estimate - x_star) <= 0.02);

  PdeProblem bad;
  bad.meshes = {8, 12};
  bad.reference_factor = 1;
  CHECK_THROWS(run_pde(bad));
}

TEST_CASE("penalty app: closed-form minimizers for m in {-1, 0, 1}") {
  const double dx = 0.01;
  for (double m : {-1.0, 0.0, 1.0}) {
    CAPTURE(m);
    PenaltyProblem p;
    p.m = m;
    const auto r = run_penalty(p);
    CHECK(std::abs(r.trace.back().estimate - std::max(0.0, m)) <= 2.0 * dx);
    CHECK(r.trace.back().violation <= 1e-3);
    CHECK(r.report.verdict == Verdict::pass);
    CHECK(r.report.stage_passed("recovery_cases"));
  }
  PenaltyProblem exact;
  exact.exact_measures = true;
  const auto re = run_penalty(exact);
  CHECK(re.trace.back().violation == 0.0);
  CHECK(re.trace.back().d_p == 0.0);
  CHECK(re.trace.back().estimate == doctest::Approx(1.0));
}

TEST_CASE("constraint qualification: boundary at the grid end is flagged") {
  const auto g = MetricGrid::uniform_1d(-2.0, 2.0, 5);
  GridFunction c(5);
  c << 1.0, 0.0, -1.0, -2.0, -3.0;
  CHECK(constraint_qualification_failures(c, g, 1e-6).empty());
  c << 4.0, 3.0, 2.0, 1.0, 0.0;
  CHECK(constraint_qualification_failures(c, g, 1e-6) == std::vector<Index>{4});

  PenaltyProblem coarse;
  coarse.x_points = 5;
  coarse.m = 2.0;
  const auto r = run_penalty(coarse);
  CHECK_FALSE(r.report.stage_passed("constraint_qualification"));
  CHECK(r.report.verdict != Verdict::pass);
  coarse.m = 1.0;
  CHECK(run_penalty(coarse).report.stage_passed("constraint_qualification"));
}

TEST_CASE("apps are reproducible across runs and thread counts") {
  const auto a = to_json(run_penalty(PenaltyProblem{})).dump();
  set_thread_count(4);
  const auto b = to_json(run_penalty(PenaltyProblem{})).dump();
  const auto c = to_json(run_sieve(SieveProblem{})).dump();
  set_thread_count(1);
  CHECK(a == b);
  CHECK(c == to_json(run_sieve(SieveProblem{})).dump());
}

TEST_CASE("problem configs round trip; schemes survive JSON unchanged") {
  PenaltyProblem p;
  p.m = -1.0;
  p.theta.assign(p.terms, 3.0);
  CHECK(to_json(penalty_from_json(to_json(p))) == to_json(p));
  SieveProblem s;
  s.density = "uniform";
  CHECK(to_json(sieve_from_json(to_json(s))) == to_json(s));
  CHECK(to_json(mollifier_from_json(to_json(MollifierProblem{}))) == to_json(MollifierProblem{}));
  CHECK(to_json(pde_from_json(to_json(PdeProblem{}))) == to_json(PdeProblem{}));

  CHECK(pointer_of([] { penalty_from_json(nlohmann::json{{"colour", 1}}, "/app"); }) == "/app/colour");
  CHECK(pointer_of([] { sieve_from_json(nlohmann::json{{"density", "gaussian"}}); }) == "/density");
  CHECK(pointer_of([] { pde_from_json(nlohmann::json{{"meshes", {8, "x"}}}); }) == "/meshes/1");
  CHECK(pointer_of([] { mollifier_from_json(nlohmann::json{{"half_width", -1.0}}); }) == "/half_width");

  PenaltyProblem small;
  small.x_points = 41;
  small.terms = 8;
  for (const auto& scheme : {run_penalty(small).scheme, run_pde(PdeProblem{}).scheme}) {
    const auto j = to_json(scheme);
    CHECK(to_json(scheme_from_json(j)) == j);
  }
}
