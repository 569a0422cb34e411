#include "epikit/epi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "epikit/config.hpp"
#include "epikit/parallel.hpp"

namespace epikit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ExtReal at(const GridFunction& h, Index i) { return ExtReal(h(static_cast<Eigen::Index>(i))); }

// a - b, with equal infinities counted as no gap.
ExtReal gap(ExtReal a, ExtReal b) { return a == b ? ExtReal(0.0) : sub_conv(a, b); }

// |a - b| on extended reals; +inf unless both are finite or equal.
double deviation(ExtReal a, ExtReal b) {
  if (a == b) return 0.0;
  if (!a.is_finite() || !b.is_finite()) return kInf;
  return std::abs(a.value() - b.value());
}

std::string nu_label(Index k) { return "nu=" + std::to_string(k + 1); }
std::string x_label(Index i) { return "x=" + std::to_string(i); }
std::string xi_label(Index i) { return "xi=" + std::to_string(i); }

std::vector<Index> all_points(Index n) {
  std::vector<Index> v(n);
  for (Index i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<Index> positive_atoms(const DiscreteMeasure& p) {
  std::vector<Index> out;
  for (std::size_t k = 0; k < p.support().size(); ++k)
    if (p.weights()[k] > 0.0) out.push_back(p.support()[k]);
  return out;
}

void check_ascending_positive(const std::vector<double>& v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0) || std::isinf(v[i])) throw std::invalid_argument(std::string(what) + " must be positive");
    if (i > 0 && v[i] < v[i - 1]) throw std::invalid_argument(std::string(what) + " must be ascending");
  }
}

// Lower limit leg: joint lower limit of hs at x against h(x) - tol, for each
// x in `points`. Where h = +inf the per-nu ball minima must rise.
Stage lower_leg(const std::string& name, const std::vector<GridFunction>& hs, const GridFunction& h,
                const MetricGrid& grid, const std::vector<Index>& points, const std::vector<double>& radii,
                Index ts, double tol) {
  Stage s{.name = name, .kind = StageKind::conclusion};
  const Index n = hs.size();
  ExtReal worst = ExtReal::plus_inf();
  std::vector<double> by_nu(n, kInf);
  for (Index x : points) {
    const ExtReal target = at(h, x);
    std::vector<ExtReal> m(n, ExtReal::plus_inf());
    for (Index k = ts; k < n; ++k)
      for (Index y : grid.ball(x, radii[k])) m[k] = min(m[k], at(hs[k], y));
    const ExtReal lower = liminf_seq(m, ts);
    if (target.is_minus_inf()) continue;
    if (target.is_plus_inf()) {
      if (!diverges_up(m, ts)) {
        s.passed = false;
        s.witnesses.push_back(x_label(x) + " limit +inf but tail does not rise");
      }
      continue;
    }
    const ExtReal g = gap(lower, target);
    for (Index k = ts; k < n; ++k) {
      const ExtReal gk = gap(m[k], target);
      by_nu[k] = std::min(by_nu[k], gk.value());
    }
    if (g < worst) {
      worst = g;
      s.lhs = lower;
      s.rhs = target;
    }
    if (g < ExtReal(-tol)) {
      s.passed = false;
      s.witnesses.push_back(x_label(x));
    }
  }
  s.margin = worst.is_plus_inf() ? ExtReal(0.0) : worst;
  nlohmann::json trend = nlohmann::json::array();
  for (Index k = ts; k < n; ++k) trend.push_back(to_json(ExtReal(by_nu[k])));
  s.detail = {{"tol", tol}, {"tail_gap_by_nu", trend}};
  return s;
}

Stage recovery_leg(const std::vector<GridFunction>& hs, const GridFunction& h, const MetricGrid& grid,
                   double radius, Index ts, double tol) {
  Stage s{.name = "recovery_leg", .kind = StageKind::conclusion};
  const Index n = hs.size();
  double worst = 0.0;
  for (Index x = 0; x < grid.size(); ++x) {
    const ExtReal target = at(h, x);
    if (target.is_plus_inf()) continue;
    const auto ball = grid.ball(x, radius);
    double dev_x = 0.0;
    for (Index k = ts; k < n; ++k) {
      double best = kInf;
      for (Index y : ball) best = std::min(best, deviation(at(hs[k], y), target));
      dev_x = std::max(dev_x, best);
    }
    if (dev_x > worst) {
      worst = dev_x;
      s.rhs = target;
    }
    if (!(dev_x <= tol)) {
      s.passed = false;
      s.witnesses.push_back(x_label(x));
    }
  }
  s.lhs = ExtReal(-worst);
  s.margin = ExtReal(-worst);
  s.detail = {{"tol", tol}, {"radius", radius}, {"max_deviation", to_json(ExtReal(worst))}};
  return s;
}

nlohmann::json schedules_json(const SchemeSchedules& s) {
  return {{"kappas", s.kappas},
          {"ks", s.ks},
          {"tail_start", s.limits.tail_start},
          {"x_radii", s.limits.x_radii},
          {"xi_radii", s.limits.xi_radii},
          {"recovery_radius", s.recovery_radius},
          {"lsc_radii", s.lsc_radii},
          {"tol", s.tol},
          {"weak_tol", s.weak_tol},
          {"dense_subset", s.dense_subset}};
}

std::vector<double> kappa_schedule_for_table(const Eigen::ArrayXXd& t, const MetricGrid& x_grid) {
  double lo = kInf, hi = -kInf;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double v = t.data()[i];
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double range = hi > lo ? hi - lo : 1.0;
  const double sep = x_grid.min_separation() > 0.0 ? x_grid.min_separation() : 1.0;
  const double top = std::exp2(std::ceil(std::log2(std::max(range / sep, 1.0))));
  return default_kappa_schedule(top / 1024.0);
}

DiagnosticReport new_report(const std::string& check, const ApproximationScheme& s) {
  DiagnosticReport r;
  r.check = check;
  r.prefix_length = s.size();
  r.schedules_used = schedules_json(s.schedules);
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

void ApproximationScheme::validate() const {
  const Index n = size();
  if (n == 0) throw std::invalid_argument("scheme: empty sequence");
  if (integrands.items.size() != n) throw std::invalid_argument("scheme: integrand and measure counts differ");
  integrands.validate();
  if (integrands.limit.xi_size() != xi_grid.size() || integrands.limit.x_size() != x_grid.size())
    throw std::invalid_argument("scheme: integrand shape does not match the grids");
  if (!p.grid().same_as(xi_grid)) throw std::invalid_argument("scheme: limit measure is not on the Xi-grid");
  for (const auto& m : ps)
    if (!m.grid().same_as(xi_grid)) throw std::invalid_argument("scheme: measure not on the Xi-grid");
  const auto& sc = schedules;
  if (sc.limits.tail_start >= n) throw std::invalid_argument("scheme: tail start past the end");
  if (sc.limits.x_radii.size() < n || sc.limits.xi_radii.size() < n)
    throw std::invalid_argument("scheme: radius schedules shorter than the sequence");
  check_ascending_positive(sc.kappas, "kappa schedule");
  check_ascending_positive(sc.ks, "truncation schedule");
  if (sc.kappas.empty() || sc.ks.empty() || sc.lsc_radii.empty())
    throw std::invalid_argument("scheme: empty schedule");
  for (Index x : sc.dense_subset)
    if (x >= x_grid.size()) throw std::invalid_argument("scheme: dense subset point outside the X-grid");
}

std::vector<double> default_truncation_schedule(const Eigen::ArrayXXd& limit_values) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < limit_values.size(); ++i) {
    const double v = limit_values.data()[i];
    if (std::isfinite(v)) m = std::max(m, std::abs(v));
  }
  const double top = 2.0 * (m + 1.0);
  std::vector<double> ks;
  for (double k = 1.0; ; k *= 2.0) {
    ks.push_back(k);
    if (k >= top) break;
  }
  return ks;
}

void ApproximationScheme::complete_schedules() {
  const Index n = size();
  auto& sc = schedules;
  if (sc.kappas.empty()) sc.kappas = kappa_schedule_for_table(integrands.limit.table(), x_grid);
  if (sc.ks.empty()) sc.ks = default_truncation_schedule(integrands.limit.table());
  if (sc.limits.x_radii.empty()) sc.limits.x_radii = shrinking_radii(n, x_grid);
  if (sc.limits.xi_radii.empty()) sc.limits.xi_radii = shrinking_radii(n, xi_grid);
  if (sc.recovery_radius <= 0.0) sc.recovery_radius = x_grid.spacing();
  if (sc.lsc_radii.empty()) sc.lsc_radii = default_regularization_radii(x_grid);
  if (sc.weak_tol <= 0.0) sc.weak_tol = 0.1;
  if (sc.tol <= 0.0) sc.tol = default_tolerance(expectation_function(integrands.limit, p), x_grid);
}

std::vector<GridFunction> expectation_trace(const ApproximationScheme& s) {
  std::vector<GridFunction> out(s.size());
  parallel_for(s.size(), [&](std::size_t k) { out[k] = expectation_function(s.integrands.items[k], s.ps[k]); });
  return out;
}

EpiOptions default_epi_options(Index n_terms, const MetricGrid& grid, const GridFunction& h) {
  EpiOptions o;
  o.tail_start = n_terms - std::max<Index>(1, n_terms / 4);
  o.radii = shrinking_radii(n_terms, grid);
  o.recovery_radius = grid.spacing();
  o.tol = default_tolerance(h, grid);
  return o;
}

DiagnosticReport check_epi_convergence(const std::vector<GridFunction>& hs, const GridFunction& h,
                                       const MetricGrid& grid, const EpiOptions& opt) {
  if (hs.empty()) throw std::invalid_argument("check_epi_convergence: empty sequence");
  if (opt.tail_start >= hs.size()) throw std::invalid_argument("check_epi_convergence: tail start past the end");
  if (opt.radii.size() < hs.size()) throw std::invalid_argument("check_epi_convergence: radius schedule too short");
  for (const auto& v : hs)
    if (static_cast<Index>(v.size()) != grid.size()) throw std::invalid_argument("check_epi_convergence: size mismatch");
  DiagnosticReport r;
  r.check = "epi_convergence";
  r.prefix_length = hs.size();
  r.schedules_used = {{"tail_start", opt.tail_start},
                      {"radii", opt.radii},
                      {"recovery_radius", opt.recovery_radius},
                      {"tol", opt.tol}};
  r.add(lower_leg("liminf_leg", hs, h, grid, all_points(grid.size()), opt.radii, opt.tail_start, opt.tol));
  r.add(recovery_leg(hs, h, grid, opt.recovery_radius, opt.tail_start, opt.tol));
  r.finalize();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

void add_envelope_route(DiagnosticReport& r, const ApproximationScheme& s, const std::vector<GridFunction>& trace) {
  const auto& sc = s.schedules;
  const Index n = s.size();
  const Index ts = sc.limits.tail_start;
  const auto subset = sc.dense_subset.empty() ? all_points(s.x_grid.size()) : sc.dense_subset;

  // Stage 1: tail bound for every kappa from some kappa_0 on.
  const Index nk = sc.kappas.size();
  std::vector<char> ok(nk, 1);
  std::vector<ExtReal> margin_k(nk, ExtReal::plus_inf());
  std::vector<std::vector<std::string>> fails(nk);
  std::vector<GridFunction> limit_env(nk);
  std::vector<std::vector<GridFunction>> tail_env(nk, std::vector<GridFunction>(n));
  parallel_for(nk * (n - ts + 1), [&](std::size_t cell) {
    const Index k = cell / (n - ts + 1);
    const Index j = cell % (n - ts + 1);
    if (j == 0) {
      limit_env[k] = expectation_function(envelope_of_integrand(s.integrands.limit, s.x_grid, sc.kappas[k]), s.p);
    } else {
      const Index nu = ts + j - 1;
      tail_env[k][nu] =
          expectation_function(envelope_of_integrand(s.integrands.items[nu], s.x_grid, sc.kappas[k]), s.ps[nu]);
    }
  });
  for (Index k = 0; k < nk; ++k) {
    for (Index x0 : subset) {
      std::vector<ExtReal> a(n, ExtReal::plus_inf());
      for (Index nu = ts; nu < n; ++nu) a[nu] = at(tail_env[k][nu], x0);
      const ExtReal lower = liminf_seq(a, ts);
      const ExtReal b = at(limit_env[k], x0);
      const ExtReal g = gap(lower, b);
      margin_k[k] = min(margin_k[k], b.is_minus_inf() ? ExtReal::minus_inf() : g);
      if (b.is_minus_inf() || g < ExtReal(-sc.tol)) {
        ok[k] = 0;
        fails[k].push_back("kappa=" + to_string(ExtReal(sc.kappas[k])) + " " + x_label(x0));
      }
    }
  }
  Index k0 = nk;
  while (k0 > 0 && ok[k0 - 1]) --k0;
  Stage st1{.name = "envelope_tail_bound", .kind = StageKind::hypothesis, .passed = k0 < nk};
  st1.margin = margin_k[nk - 1];
  st1.lhs = st1.margin;
  st1.rhs = ExtReal(-sc.tol);
  if (st1.passed) st1.detail = {{"kappa_0", sc.kappas[k0]}};
  else st1.witnesses = fails[nk - 1];
  r.add(std::move(st1));

  // Stage 2: lower semicontinuity in x at every atom of P.
  Stage st2{.name = "lsc_in_x", .kind = StageKind::hypothesis};
  for (Index xi : positive_atoms(s.p)) {
    const auto rep = check_lsc(s.integrands.limit.slice(xi), s.x_grid, sc.lsc_radii, sc.tol);
    if (rep.verdict != Verdict::pass) {
      st2.passed = false;
      st2.witnesses.push_back(xi_label(xi));
    }
  }
  st2.margin = st2.passed ? ExtReal(0.0) : ExtReal(-1.0);
  r.add(std::move(st2));

  // Stage 3: the lower bound itself at every x.
  const GridFunction ef = expectation_function(s.integrands.limit, s.p);
  r.add(lower_leg("lower_bound", trace, ef, s.x_grid, all_points(s.x_grid.size()), sc.limits.x_radii, ts, sc.tol));

  // Finite lower limit somewhere forces a finite limit expectation everywhere.
  Index witness = s.x_grid.size();
  for (Index x = 0; x < s.x_grid.size() && witness == s.x_grid.size(); ++x)
    if (joint_liminf(trace, s.x_grid, x, sc.limits.x_radii, ts) < ExtReal::plus_inf()) witness = x;
  if (witness == s.x_grid.size()) {
    Stage info{.name = "lower_bound_finite", .kind = StageKind::info};
    info.detail = {{"note", "no witness found"}};
    r.add(std::move(info));
  } else {
    Stage st4{.name = "lower_bound_finite", .kind = StageKind::conclusion};
    for (Index x = 0; x < s.x_grid.size(); ++x)
      if (at(ef, x).is_minus_inf()) {
        st4.passed = false;
        st4.witnesses.push_back(x_label(x));
      }
    st4.margin = st4.passed ? ExtReal(0.0) : ExtReal::minus_inf();
    st4.detail = {{"witness", witness}};
    r.add(std::move(st4));
  }
}

}  // namespace

DiagnosticReport parametric_fatou_envelope_route(const ApproximationScheme& s) {
  s.validate();
  auto r = new_report("fatou_envelope_route", s);
  add_envelope_route(r, s, expectation_trace(s));
  r.finalize();
  return r;
}

DiagnosticReport epi_convergence_expectations(const ApproximationScheme& s) {
  s.validate();
  auto r = new_report("epi_convergence_expectations", s);
  const auto trace = expectation_trace(s);
  add_envelope_route(r, s, trace);
  const auto& sc = s.schedules;
  const GridFunction ef = expectation_function(s.integrands.limit, s.p);
  const auto subset = sc.dense_subset.empty() ? all_points(s.x_grid.size()) : sc.dense_subset;

  Stage up{.name = "limsup_on_subset", .kind = StageKind::hypothesis};
  ExtReal worst = ExtReal::plus_inf();
  for (Index x0 : subset) {
    std::vector<ExtReal> a;
    for (const auto& t : trace) a.push_back(at(t, x0));
    const ExtReal sup = limsup_seq(a, sc.limits.tail_start);
    const ExtReal g = gap(at(ef, x0), sup);
    if (g < worst) {
      worst = g;
      up.lhs = at(ef, x0);
      up.rhs = sup;
    }
    if (g < ExtReal(-sc.tol)) {
      up.passed = false;
      up.witnesses.push_back(x_label(x0));
    }
  }
  up.margin = worst.is_plus_inf() ? ExtReal(0.0) : worst;
  r.add(std::move(up));

  const EpiOptions opt{sc.limits.tail_start, sc.limits.x_radii, sc.recovery_radius, sc.tol};
  const auto epi = check_epi_convergence(trace, ef, s.x_grid, opt);
  for (const auto& st : epi.stages) r.add(st);
  r.finalize();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

void add_weak_route(DiagnosticReport& r, const ApproximationScheme& s, const std::vector<GridFunction>& trace,
                    const std::vector<Index>& points) {
  const auto& sc = s.schedules;
  const Index n = s.size();
  const Index ts = sc.limits.tail_start;

  std::vector<double> bl(n);
  parallel_for(n, [&](std::size_t k) { bl[k] = bounded_lipschitz_distance(s.ps[k], s.p); });
  Stage w{.name = "weak_convergence", .kind = StageKind::hypothesis};
  double worst_bl = 0.0;
  for (Index k = ts; k < n; ++k) worst_bl = std::max(worst_bl, bl[k]);
  w.passed = worst_bl <= sc.weak_tol;
  w.lhs = ExtReal(sc.weak_tol);
  w.rhs = ExtReal(worst_bl);
  w.margin = ExtReal(sc.weak_tol - worst_bl);
  if (!w.passed) w.witnesses.push_back("bounded-Lipschitz distance " + to_string(ExtReal(worst_bl)) + " on the tail");
  w.detail = {{"bl_by_nu", bl}};
  r.add(std::move(w));

  const double kmax = sc.ks.back();
  Stage ui{.name = "uniform_integrability_below", .kind = StageKind::hypothesis};
  Stage jl{.name = "joint_lower_limit", .kind = StageKind::hypothesis};
  ExtReal ui_worst(0.0);
  ExtReal jl_worst = ExtReal::plus_inf();
  const auto atoms = positive_atoms(s.p);
  std::vector<ExtReal> ui_val(points.size());
  std::vector<std::vector<ExtReal>> jl_gap(points.size());
  std::vector<std::vector<char>> jl_ok(points.size());
  parallel_for(points.size(), [&](std::size_t pi) {
    const Index x = points[pi];
    ExtReal t = ExtReal::plus_inf();
    for (Index k = ts; k < n; ++k)
      for (Index y : s.x_grid.ball(x, sc.limits.x_radii[k]))
        t = min(t, tail_expectation_below(s.integrands.items[k], s.ps[k], y, kmax));
    ui_val[pi] = t;
    for (Index xi : atoms) {
      const ExtReal target = s.integrands.limit(xi, x);
      std::vector<ExtReal> m(n, ExtReal::plus_inf());
      for (Index k = ts; k < n; ++k)
        for (Index y : s.x_grid.ball(x, sc.limits.x_radii[k]))
          for (Index z : s.xi_grid.ball(xi, sc.limits.xi_radii[k])) m[k] = min(m[k], s.integrands.items[k](z, y));
      const ExtReal lower = liminf_seq(m, ts);
      bool good;
      ExtReal g(0.0);
      if (target.is_minus_inf()) good = true;
      else if (target.is_plus_inf()) good = diverges_up(m, ts);
      else {
        g = gap(lower, target);
        good = g >= ExtReal(-sc.tol);
      }
      jl_gap[pi].push_back(g);
      jl_ok[pi].push_back(good ? 1 : 0);
    }
  });
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    ui_worst = min(ui_worst, ui_val[pi]);
    if (ui_val[pi] < ExtReal(-sc.tol)) {
      ui.passed = false;
      ui.witnesses.push_back(x_label(points[pi]));
    }
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      jl_worst = min(jl_worst, jl_gap[pi][a]);
      if (!jl_ok[pi][a]) {
        jl.passed = false;
        jl.witnesses.push_back(x_label(points[pi]) + " " + xi_label(atoms[a]));
      }
    }
  }
  ui.lhs = ui_worst;
  ui.rhs = ExtReal(-sc.tol);
  ui.margin = ui_worst;
  ui.detail = {{"K", kmax}};
  r.add(std::move(ui));
  jl.margin = jl_worst.is_plus_inf() ? ExtReal(0.0) : jl_worst;
  r.add(std::move(jl));

  const GridFunction ef = expectation_function(s.integrands.limit, s.p);
  r.add(lower_leg("lower_bound", trace, ef, s.x_grid, points, sc.limits.x_radii, ts, sc.tol));
}

}  // namespace

DiagnosticReport fatou_weak(const ApproximationScheme& s, const std::vector<Index>& points) {
  s.validate();
  auto r = new_report("fatou_weak", s);
  add_weak_route(r, s, expectation_trace(s), points.empty() ? all_points(s.x_grid.size()) : points);
  r.finalize();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

void validate_sequence(const SequenceOnXi& in) {
  const Index n = in.hs.size();
  if (n == 0 || in.ps.size() != n) throw std::invalid_argument("fatou: sequence lengths differ or are zero");
  if (in.limits.tail_start >= n) throw std::invalid_argument("fatou: tail start past the end");
  if (in.limits.xi_radii.size() < n) throw std::invalid_argument("fatou: radius schedule too short");
  if (in.ks.empty()) throw std::invalid_argument("fatou: empty truncation schedule");
  const Index m = in.p.grid().size();
  for (Index k = 0; k < n; ++k) {
    if (static_cast<Index>(in.hs[k].size()) != m || !in.ps[k].grid().same_as(in.p.grid()))
      throw std::invalid_argument("fatou: grid mismatch");
  }
}

nlohmann::json sequence_schedules(const SequenceOnXi& in) {
  return {{"tail_start", in.limits.tail_start}, {"xi_radii", in.limits.xi_radii}, {"ks", in.ks}, {"tol", in.tol}};
}

}  // namespace

DiagnosticReport fatou_extended(const SequenceOnXi& in) {
  validate_sequence(in);
  const Index n = in.hs.size();
  const Index ts = in.limits.tail_start;
  const MetricGrid& g = in.p.grid();
  DiagnosticReport r;
  r.check = "fatou_extended";
  r.prefix_length = n;
  r.schedules_used = sequence_schedules(in);

  // Truncated lower tails, nondecreasing in K; the top of the schedule stands in for the limit.
  nlohmann::json by_k = nlohmann::json::array();
  ExtReal top(0.0);
  for (double K : in.ks) {
    std::vector<ExtReal> t(n, ExtReal(0.0));
    for (Index k = ts; k < n; ++k) t[k] = tail_expectation_below(in.ps[k], in.hs[k], K);
    top = liminf_seq(t, ts);
    by_k.push_back(to_json(top));
  }
  Stage ui{.name = "uniform_integrability_below", .kind = StageKind::hypothesis};
  ui.passed = top >= ExtReal(-in.tol);
  ui.lhs = top;
  ui.rhs = ExtReal(-in.tol);
  ui.margin = top;
  ui.detail = {{"by_K", by_k}};
  r.add(std::move(ui));

  GridFunction lower = GridFunction::Zero(static_cast<Eigen::Index>(g.size()));
  for (Index xi : in.p.support())
    lower(static_cast<Eigen::Index>(xi)) = joint_liminf(in.hs, g, xi, in.limits.xi_radii, ts).value();
  std::vector<ExtReal> e(n);
  for (Index k = 0; k < n; ++k) e[k] = expect(in.ps[k], in.hs[k]);
  const ExtReal lhs = liminf_seq(e, ts);
  const ExtReal rhs = expect(in.p, lower);

  Stage fi{.name = "fatou_inequality", .kind = StageKind::conclusion};
  fi.lhs = lhs;
  fi.rhs = rhs;
  fi.margin = gap(lhs, rhs);
  fi.passed = fi.margin >= ExtReal(-in.tol);
  if (!fi.passed) fi.witnesses.push_back("lower limit of expectations below expectation of lower limit");
  r.add(std::move(fi));

  GridFunction pos = lower.max(0.0);
  const ExtReal pos_e = expect(in.p, pos);
  Stage di{.name = "finite_or_integrable_positive_part", .kind = StageKind::conclusion};
  di.passed = lhs.is_plus_inf() || pos_e.is_finite();
  di.lhs = lhs;
  di.rhs = pos_e;
  di.margin = ExtReal(di.passed ? 0.0 : -1.0);
  r.add(std::move(di));
  r.finalize();
  return r;
}

DiagnosticReport fatou_upper(const SequenceOnXi& in) {
  validate_sequence(in);
  const Index n = in.hs.size();
  const Index ts = in.limits.tail_start;
  const MetricGrid& g = in.p.grid();
  DiagnosticReport r;
  r.check = "fatou_upper";
  r.prefix_length = n;
  r.schedules_used = sequence_schedules(in);

  nlohmann::json by_k = nlohmann::json::array();
  ExtReal top(0.0);
  for (double K : in.ks) {
    std::vector<ExtReal> t(n, ExtReal(0.0));
    for (Index k = ts; k < n; ++k) t[k] = tail_expectation_above(in.ps[k], in.hs[k], K);
    top = limsup_seq(t, ts);
    by_k.push_back(to_json(top));
  }
  Stage ui{.name = "uniform_integrability_above", .kind = StageKind::hypothesis};
  ui.passed = top <= ExtReal(in.tol);
  ui.lhs = ExtReal(in.tol);
  ui.rhs = top;
  ui.margin = sub_conv(ExtReal(0.0), top);
  ui.detail = {{"by_K", by_k}};
  r.add(std::move(ui));

  GridFunction upper = GridFunction::Zero(static_cast<Eigen::Index>(g.size()));
  for (Index xi : in.p.support())
    upper(static_cast<Eigen::Index>(xi)) = joint_limsup(in.hs, g, xi, in.limits.xi_radii, ts).value();
  std::vector<ExtReal> e(n);
  for (Index k = 0; k < n; ++k) e[k] = expect(in.ps[k], in.hs[k]);
  const ExtReal lhs = limsup_seq(e, ts);
  const ExtReal rhs = expect(in.p, upper);

  Stage fi{.name = "reverse_fatou_inequality", .kind = StageKind::conclusion};
  fi.lhs = rhs;
  fi.rhs = lhs;
  fi.margin = gap(rhs, lhs);
  fi.passed = fi.margin >= ExtReal(-in.tol);
  if (!fi.passed) fi.witnesses.push_back("upper limit of expectations above expectation of upper limit");
  r.add(std::move(fi));

  GridFunction neg = (-upper).max(0.0);
  const ExtReal neg_e = expect(in.p, neg);
  Stage di{.name = "finite_or_integrable_negative_part", .kind = StageKind::conclusion};
  di.passed = lhs.is_minus_inf() || neg_e.is_finite();
  di.lhs = lhs;
  di.rhs = neg_e;
  di.margin = ExtReal(di.passed ? 0.0 : -1.0);
  r.add(std::move(di));
  r.finalize();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct RecoveryCheck {
  bool integrable = true;
  bool upper = true;
  ExtReal top_tail{0.0};
  std::vector<std::string> witnesses;
};

RecoveryCheck check_recovery(const ApproximationScheme& s, Index x, const std::vector<Index>& xs) {
  const auto& sc = s.schedules;
  const Index n = s.size();
  const Index ts = sc.limits.tail_start;
  RecoveryCheck c;
  for (Index k = ts; k < n; ++k)
    c.top_tail = max(c.top_tail, tail_expectation_above(s.integrands.items[k], s.ps[k], xs[k], sc.ks.back()));
  c.integrable = c.top_tail <= ExtReal(sc.tol);
  if (!c.integrable) c.witnesses.push_back(x_label(x) + " upper tail " + to_string(c.top_tail));
  for (Index xi : positive_atoms(s.p)) {
    const ExtReal target = s.integrands.limit(xi, x);
    if (target.is_plus_inf()) continue;
    ExtReal up = ExtReal::minus_inf();
    for (Index k = ts; k < n; ++k)
      for (Index z : s.xi_grid.ball(xi, sc.limits.xi_radii[k])) up = max(up, s.integrands.items[k](z, xs[k]));
    const bool good = target.is_minus_inf() ? up.is_minus_inf() : gap(target, up) >= ExtReal(-sc.tol);
    if (!good) {
      c.upper = false;
      c.witnesses.push_back(x_label(x) + " " + xi_label(xi));
    }
  }
  return c;
}

}  // namespace

DiagnosticReport epi_convergence_weak(const ApproximationScheme& s, const RecoverySequences& recovery) {
  s.validate();
  const auto& sc = s.schedules;
  const Index n = s.size();
  const Index nx = s.x_grid.size();
  if (!recovery.empty() && recovery.size() != nx)
    throw std::invalid_argument("epi_convergence_weak: one recovery sequence per grid point expected");
  auto r = new_report("epi_convergence_weak", s);
  const auto trace = expectation_trace(s);
  add_weak_route(r, s, trace, all_points(nx));
  const GridFunction ef = expectation_function(s.integrands.limit, s.p);

  std::vector<RecoveryCheck> checks(nx);
  std::vector<std::string> chosen(nx, "none");
  parallel_for(nx, [&](std::size_t x) {
    if (at(ef, x).is_plus_inf()) {
      chosen[x] = "not needed";
      return;
    }
    if (!recovery.empty()) {
      if (recovery[x].size() != n) throw std::invalid_argument("epi_convergence_weak: recovery sequence length");
      checks[x] = check_recovery(s, x, recovery[x]);
      chosen[x] = "supplied";
      return;
    }
    const std::vector<Index> constant(n, x);
    checks[x] = check_recovery(s, x, constant);
    chosen[x] = "constant";
    if (checks[x].integrable && checks[x].upper) return;
    std::vector<Index> searched(n, x);
    const auto ball = s.x_grid.ball(x, sc.recovery_radius);
    for (Index k = 0; k < n; ++k) {
      ExtReal best = ExtReal::plus_inf();
      for (Index y : ball)
        if (at(trace[k], y) < best) {
          best = at(trace[k], y);
          searched[k] = y;
        }
    }
    auto second = check_recovery(s, x, searched);
    if (second.integrable && second.upper) {
      checks[x] = std::move(second);
      chosen[x] = "ball search";
    }
  });
  Stage ui{.name = "upper_integrability", .kind = StageKind::hypothesis};
  Stage up{.name = "recovery_upper_limit", .kind = StageKind::hypothesis};
  nlohmann::json how = nlohmann::json::object();
  for (Index x = 0; x < nx; ++x) {
    const auto& c = checks[x];
    if (!c.integrable) ui.passed = false;
    if (!c.upper) up.passed = false;
    for (const auto& w : c.witnesses) (w.find("upper tail") != std::string::npos ? ui : up).witnesses.push_back(w);
    how[chosen[x]] = how.value(chosen[x], 0) + 1;
  }
  ui.margin = ExtReal(ui.passed ? 0.0 : -1.0);
  up.margin = ExtReal(up.passed ? 0.0 : -1.0);
  up.detail = {{"recovery_sequences", how}};
  r.add(std::move(ui));
  r.add(std::move(up));

  const EpiOptions opt{sc.limits.tail_start, sc.limits.x_radii, sc.recovery_radius, sc.tol};
  const auto epi = check_epi_convergence(trace, ef, s.x_grid, opt);
  for (const auto& st : epi.stages) r.add(st);
  r.finalize();
  return r;
}

// ---------------------------------------------------------------------------

double attouch_wets_distance(const GridFunction& h1, const GridFunction& h2, const MetricGrid& grid, double rho,
                             double alpha_step) {
  if (!(rho > 0.0)) throw std::invalid_argument("attouch_wets_distance: rho must be positive");
  const Index n = grid.size();
  if (static_cast<Index>(h1.size()) != n || static_cast<Index>(h2.size()) != n)
    throw std::invalid_argument("attouch_wets_distance: size mismatch");
  if (alpha_step <= 0.0) {
    double lo = kInf, hi = -kInf;
    for (const GridFunction* h : {&h1, &h2})
      for (Eigen::Index i = 0; i < h->size(); ++i)
        if (std::isfinite((*h)(i))) {
          lo = std::min(lo, (*h)(i));
          hi = std::max(hi, (*h)(i));
        }
    const double range = hi > lo ? hi - lo : 0.0;
    alpha_step = range > 0.0 ? std::min(range / 200.0, rho) : rho / 200.0;
  }
  const auto steps = static_cast<Index>(std::ceil(2.0 * rho / alpha_step - 1e-9));
  std::vector<double> alphas;
  for (Index k = 0; k <= steps; ++k) alphas.push_back(std::min(-rho + static_cast<double>(k) * alpha_step, rho));

  std::vector<Index> centre;
  for (Index i = 0; i < n; ++i)
    if (grid.distance_to_origin(i) <= rho) centre.push_back(i);
  const bool empty1 = (h1 == kInf).all();
  const bool empty2 = (h2 == kInf).all();
  if (centre.empty() || (empty1 && empty2)) return 0.0;
  if (empty1 != empty2) return 2.0 * rho;

  // Finite points of each function; distances to them are computed once per centre.
  std::vector<Index> fin1, fin2;
  for (Index y = 0; y < n; ++y) {
    if (h1(static_cast<Eigen::Index>(y)) < kInf) fin1.push_back(y);
    if (h2(static_cast<Eigen::Index>(y)) < kInf) fin2.push_back(y);
  }
  auto epi_dist = [](const std::vector<double>& d2x, const std::vector<double>& v, double a) {
    double best = kInf;
    for (std::size_t q = 0; q < v.size(); ++q) {
      const double up = std::max(v[q] - a, 0.0);
      best = std::min(best, d2x[q] + up * up);
    }
    return std::sqrt(best);
  };
  std::vector<double> per(centre.size(), 0.0);
  parallel_for(centre.size(), [&](std::size_t c) {
    const Index x = centre[c];
    std::vector<double> sq1, sq2, v1, v2;
    for (Index y : fin1) {
      const double d = grid.distance(x, y);
      sq1.push_back(d * d);
      v1.push_back(h1(static_cast<Eigen::Index>(y)));
    }
    for (Index y : fin2) {
      const double d = grid.distance(x, y);
      sq2.push_back(d * d);
      v2.push_back(h2(static_cast<Eigen::Index>(y)));
    }
    double worst = 0.0;
    for (double a : alphas) worst = std::max(worst, std::abs(epi_dist(sq1, v1, a) - epi_dist(sq2, v2, a)));
    per[c] = worst;
  });
  return *std::max_element(per.begin(), per.end());
}

DiagnosticReport check_minimizer_transfer(const std::vector<GridFunction>& hs, const GridFunction& h,
                                          const MetricGrid& grid, Index tail_start, double tol) {
  if (hs.empty() || tail_start >= hs.size()) throw std::invalid_argument("check_minimizer_transfer: bad tail start");
  DiagnosticReport r;
  r.check = "minimizer_transfer";
  r.prefix_length = hs.size();
  r.schedules_used = {{"tail_start", tail_start}, {"tol", tol}};
  const double mh = h.minCoeff();
  if (!std::isfinite(mh)) {
    Stage info{.name = "min_value", .kind = StageKind::info};
    info.detail = {{"note", "limit has no finite minimum"}};
    r.add(std::move(info));
    r.finalize();
    return r;
  }
  const GridFunction& last = hs.back();
  const double ml = last.minCoeff();
  Stage mv{.name = "min_value", .kind = StageKind::conclusion};
  mv.lhs = ExtReal(ml);
  mv.rhs = ExtReal(mh);
  const double dev = std::isfinite(ml) ? std::abs(ml - mh) : kInf;
  mv.margin = ExtReal(-dev);
  mv.passed = dev <= tol;
  r.add(std::move(mv));

  std::vector<Index> near;
  for (Index i = 0; i < grid.size(); ++i)
    if (h(static_cast<Eigen::Index>(i)) <= mh + 2.0 * tol) near.push_back(i);
  Stage cl{.name = "argmin_cluster", .kind = StageKind::conclusion};
  double worst = 0.0;
  std::vector<Index> seen;
  for (Index k = tail_start; k < hs.size(); ++k) {
    Eigen::Index a = 0;
    if (!std::isfinite(hs[k].minCoeff(&a))) continue;
    seen.push_back(static_cast<Index>(a));
    double d = kInf;
    for (Index j : near) d = std::min(d, grid.distance(static_cast<Index>(a), j));
    worst = std::max(worst, d);
    if (d > grid.spacing() + 1e-12) {
      cl.passed = false;
      cl.witnesses.push_back(nu_label(k) + " argmin " + x_label(static_cast<Index>(a)));
    }
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  cl.lhs = ExtReal(grid.spacing());
  cl.rhs = ExtReal(worst);
  cl.margin = ExtReal(grid.spacing() - worst);
  cl.detail = {{"tail_argmins", seen}, {"limit_near_argmin", near}};
  r.add(std::move(cl));
  r.finalize();
  return r;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const ApproximationScheme& s) {
  nlohmann::json seq = nlohmann::json::array();
  for (Index k = 0; k < s.size(); ++k)
    seq.push_back({{"integrand", to_json(s.integrands.items[k])}, {"measure", to_json(s.ps[k])}});
  return {{"schema_version", 1},
          {"x_grid", to_json(s.x_grid)},
          {"xi_grid", to_json(s.xi_grid)},
          {"limit", {{"integrand", to_json(s.integrands.limit)}, {"measure", to_json(s.p)}}},
          {"sequence", seq},
          {"schedules", schedules_json(s.schedules)}};
}

namespace {

MetricGrid read_grid(const nlohmann::json& j, const std::string& ptr) {
  try {
    return grid_from_json(j);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(ptr, e.what());
  }
}

DiscreteMeasure read_measure(const nlohmann::json& j, const std::string& ptr, const MetricGrid& g) {
  require_object(j, ptr, {"support", "weights"});
  try {
    return measure_from_json(j, g);
  } catch (const std::exception& e) {
    throw ConfigError(ptr, e.what());
  }
}

Integrand read_integrand(const nlohmann::json& j, const std::string& ptr, const MetricGrid& xi, const MetricGrid& x) {
  Integrand f;
  try {
    f = integrand_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError(ptr, e.what());
  }
  if (f.xi_size() != xi.size() || f.x_size() != x.size())
    throw ConfigError(ptr, "table must have one row per Xi-grid point and one column per X-grid point");
  return f;
}

std::pair<Integrand, DiscreteMeasure> read_term(const nlohmann::json& j, const std::string& ptr, const MetricGrid& xi,
                                                const MetricGrid& x) {
  require_object(j, ptr, {"integrand", "measure"});
  return {read_integrand(require_member(j, ptr, "integrand"), child_pointer(ptr, "integrand"), xi, x),
          read_measure(require_member(j, ptr, "measure"), child_pointer(ptr, "measure"), xi)};
}

}  // namespace

ApproximationScheme scheme_from_json(const nlohmann::json& j) {
  require_object(j, "", {"schema_version", "x_grid", "xi_grid", "limit", "sequence", "schedules"});
  if (auto it = j.find("schema_version"); it != j.end() && read_index(*it, "/schema_version") != 1)
    throw ConfigError("/schema_version", "unsupported schema version");
  ApproximationScheme s;
  s.x_grid = read_grid(require_member(j, "", "x_grid"), "/x_grid");
  s.xi_grid = read_grid(require_member(j, "", "xi_grid"), "/xi_grid");
  auto [f, p] = read_term(require_member(j, "", "limit"), "/limit", s.xi_grid, s.x_grid);
  s.integrands.limit = std::move(f);
  s.p = std::move(p);
  const auto& seq = require_member(j, "", "sequence");
  if (!seq.is_array() || seq.empty()) throw ConfigError("/sequence", "expected a nonempty array");
  for (std::size_t k = 0; k < seq.size(); ++k) {
    auto [fk, pk] = read_term(seq[k], child_pointer("/sequence", k), s.xi_grid, s.x_grid);
    s.integrands.items.push_back(std::move(fk));
    s.ps.push_back(std::move(pk));
  }
  const Index n = s.size();
  auto& sc = s.schedules;
  sc.limits.tail_start = n - std::max<Index>(1, n / 4);
  if (auto it = j.find("schedules"); it != j.end()) {
    const std::string ptr = "/schedules";
    require_object(*it, ptr,
                   {"kappas", "ks", "tail_start", "x_radii", "xi_radii", "recovery_radius", "lsc_radii", "tol",
                    "weak_tol", "dense_subset"});
    read_optional(*it, ptr, "kappas", sc.kappas, read_numbers);
    read_optional(*it, ptr, "ks", sc.ks, read_numbers);
    read_optional(*it, ptr, "tail_start", sc.limits.tail_start, read_index);
    read_optional(*it, ptr, "x_radii", sc.limits.x_radii, read_numbers);
    read_optional(*it, ptr, "xi_radii", sc.limits.xi_radii, read_numbers);
    read_optional(*it, ptr, "recovery_radius", sc.recovery_radius, read_positive);
    read_optional(*it, ptr, "lsc_radii", sc.lsc_radii, read_numbers);
    read_optional(*it, ptr, "tol", sc.tol, read_positive);
    read_optional(*it, ptr, "weak_tol", sc.weak_tol, read_positive);
    read_optional(*it, ptr, "dense_subset", sc.dense_subset, read_indices);
    if (sc.limits.tail_start >= n) throw ConfigError(ptr + "/tail_start", "must be below the sequence length");
    if (!sc.limits.x_radii.empty() && sc.limits.x_radii.size() < n)
      throw ConfigError(ptr + "/x_radii", "needs one radius per sequence term");
    if (!sc.limits.xi_radii.empty() && sc.limits.xi_radii.size() < n)
      throw ConfigError(ptr + "/xi_radii", "needs one radius per sequence term");
    for (std::size_t i = 0; i < sc.dense_subset.size(); ++i)
      if (sc.dense_subset[i] >= s.x_grid.size())
        throw ConfigError(child_pointer(ptr + "/dense_subset", i), "point outside the X-grid");
  }
  s.complete_schedules();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("/schedules", e.what());
  }
  return s;
}

}  // namespace epikit
