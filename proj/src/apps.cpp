#include "epikit/apps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "epikit/parallel.hpp"

namespace epikit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void append_stages(DiagnosticReport& dst, const DiagnosticReport& src, const std::string& prefix) {
  for (Stage s : src.stages) {
    s.name = prefix + "/" + s.name;
    dst.add(std::move(s));
  }
}

// Smallest index of the minimum; 0 when everything is +inf.
Index argmin_index(const GridFunction& h) {
  Index best = 0;
  for (Index i = 1; i < static_cast<Index>(h.size()); ++i)
    if (h(static_cast<Eigen::Index>(i)) < h(static_cast<Eigen::Index>(best))) best = i;
  return best;
}

Index default_tail_start(Index n) { return n - std::max<Index>(1, n / 4); }

nlohmann::json numbers_json(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(to_json(ExtReal(x)));
  return a;
}

// theta^nu d(P^nu, P) must decay: the second half of the prefix averages below
// the first half, or is zero to rounding.
Stage weak_rate_stage(const std::vector<double>& rate) {
  Stage s{.name = "weak_rate", .kind = StageKind::hypothesis};
  const Index n = rate.size();
  const Index half = n / 2;
  double head = 0.0, tail = 0.0, tail_max = 0.0;
  for (Index k = 0; k < half; ++k) head += rate[k];
  for (Index k = half; k < n; ++k) {
    tail += rate[k];
    tail_max = std::max(tail_max, rate[k]);
  }
  head = half > 0 ? head / static_cast<double>(half) : kInf;
  tail /= static_cast<double>(n - half);
  s.passed = tail_max <= 1e-9 || tail < head;
  s.lhs = ExtReal(head);
  s.rhs = ExtReal(tail);
  s.margin = tail_max <= 1e-9 ? ExtReal(0.0) : ExtReal(head - tail);
  if (!s.passed) s.witnesses.push_back("theta * d_P does not decay over the prefix");
  s.detail = {{"theta_times_d_P", numbers_json(rate)}};
  return s;
}

// min over t of (1 - t) E^{P^nu}[f] + t E^U[f] + theta t d(U, P^nu); this is
// the objective over Q_t = (1 - t) P^nu + t U since d(Q_t, P^nu) = t d(U, P^nu).
struct Profile {
  GridFunction values;
  std::vector<double> t_at;
};

Profile mixture_profile(const GridFunction& e_pnu, const GridFunction& e_u, double theta, double d_u,
                        const std::vector<double>& ts) {
  Profile out;
  const auto n = e_pnu.size();
  out.values = GridFunction::Constant(n, kInf);
  out.t_at.assign(static_cast<std::size_t>(n), ts.front());
  for (Eigen::Index x = 0; x < n; ++x) {
    for (double t : ts) {
      ExtReal v = add_conv(scale_nonneg(ExtReal(e_pnu(x)), 1.0 - t), scale_nonneg(ExtReal(e_u(x)), t));
      v = add_conv(v, ExtReal(theta * t * d_u));
      if (v < ExtReal(out.values(x))) {
        out.values(x) = v.value();
        out.t_at[static_cast<std::size_t>(x)] = t;
      }
    }
  }
  return out;
}

void check_mixing_grid(const std::vector<double>& ts) {
  if (ts.empty()) throw std::invalid_argument("mixing_grid must not be empty");
  for (double t : ts)
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("mixing_grid entries must lie in [0, 1]");
}

std::vector<double> resolve_theta(const std::vector<double>& given, const std::vector<double>& nus, double power,
                                  const char* what) {
  if (!given.empty()) {
    if (given.size() != nus.size()) throw std::invalid_argument(std::string(what) + ": theta needs one entry per nu");
    for (double t : given)
      if (!(t >= 0.0) || std::isinf(t)) throw std::invalid_argument(std::string(what) + ": theta must be >= 0");
    return given;
  }
  std::vector<double> out;
  for (double n : nus) out.push_back(std::pow(n, power));
  return out;
}

std::vector<double> aw_trace(const std::vector<GridFunction>& hs, const GridFunction& h, const MetricGrid& grid,
                             double rho) {
  std::vector<double> out(hs.size());
  for (Index k = 0; k < hs.size(); ++k) out[k] = attouch_wets_distance(hs[k], h, grid, rho);
  return out;
}

// --- sieve helpers ---------------------------------------------------------

Index bin_of(Index cell, Index bins, Index cells) { return cell * bins / cells; }

Eigen::ArrayXd project_to_bins(const Eigen::ArrayXd& v, Index bins) {
  const Index m = static_cast<Index>(v.size());
  std::vector<double> sum(bins, 0.0);
  std::vector<double> count(bins, 0.0);
  for (Index i = 0; i < m; ++i) {
    sum[bin_of(i, bins, m)] += v(static_cast<Eigen::Index>(i));
    count[bin_of(i, bins, m)] += 1.0;
  }
  Eigen::ArrayXd out(v.size());
  for (Index i = 0; i < m; ++i) out(static_cast<Eigen::Index>(i)) = sum[bin_of(i, bins, m)] / count[bin_of(i, bins, m)];
  return out;
}

bool constant_on_bins(const Eigen::ArrayXd& v, Index bins) {
  return ((project_to_bins(v, bins) - v).abs() <= 1e-12).all();
}

Index default_bins(std::size_t n) {
  Index b = static_cast<Index>(std::ceil(std::cbrt(static_cast<double>(n))));
  while (b > 1 && (b - 1) * (b - 1) * (b - 1) >= n) --b;
  while (b * b * b < n) ++b;
  return b;
}

// Bin boundaries as indices into the cell-edge grid.
std::vector<Index> bin_edges(Index bins, Index cells) {
  std::vector<Index> e;
  for (Index k = 0; k <= bins; ++k) e.push_back((k * cells + bins - 1) / bins);
  e.erase(std::unique(e.begin(), e.end()), e.end());
  return e;
}

}  // namespace

Eigen::ArrayXd histogram_mle(const DiscreteMeasure& q, std::size_t bins) {
  const Index m = q.grid().size();
  if (bins == 0 || bins > m) throw std::invalid_argument("histogram_mle: bins must be in [1, cells]");
  const Eigen::ArrayXd mass = q.dense();
  std::vector<double> bin_mass(bins, 0.0), bin_cells(bins, 0.0);
  for (Index i = 0; i < m; ++i) {
    bin_mass[bin_of(i, bins, m)] += mass(static_cast<Eigen::Index>(i));
    bin_cells[bin_of(i, bins, m)] += 1.0;
  }
  Eigen::ArrayXd out(static_cast<Eigen::Index>(m));
  for (Index i = 0; i < m; ++i) {
    const Index b = bin_of(i, bins, m);
    out(static_cast<Eigen::Index>(i)) = bin_mass[b] * static_cast<double>(m) / bin_cells[b];
  }
  if (!(out.maxCoeff() > 0.0)) throw std::invalid_argument("histogram_mle: infeasible all-zero density");
  return out;
}

AppRun run_sieve(const SieveProblem& p) {
  const Index m = p.grid_points;
  if (m < 2) throw std::invalid_argument("sieve: grid_points must be >= 2");
  if (p.sample_sizes.empty()) throw std::invalid_argument("sieve: sample_sizes must not be empty");
  for (std::size_t k = 0; k < p.sample_sizes.size(); ++k)
    if (p.sample_sizes[k] == 0 || (k > 0 && p.sample_sizes[k] <= p.sample_sizes[k - 1]))
      throw std::invalid_argument("sieve: sample_sizes must be positive and increasing");
  if (!p.bins.empty() && p.bins.size() != p.sample_sizes.size())
    throw std::invalid_argument("sieve: bins needs one entry per sample size");
  if (p.family_points < 2) throw std::invalid_argument("sieve: family_points must be >= 2");
  check_mixing_grid(p.mixing_grid);
  const Index n = p.sample_sizes.size();

  std::vector<double> nus;
  for (auto s : p.sample_sizes) nus.push_back(static_cast<double>(s));
  std::vector<Index> bins(n);
  for (Index k = 0; k < n; ++k) {
    bins[k] = p.bins.empty() ? std::min(default_bins(p.sample_sizes[k]), m) : p.bins[k];
    if (bins[k] == 0 || bins[k] > m) throw std::invalid_argument("sieve: bins must be in [1, grid_points]");
  }
  const auto theta = resolve_theta(p.theta, nus, 0.25, "sieve");

  const auto xi = MetricGrid::uniform_1d(0.5 / static_cast<double>(m), 1.0 - 0.5 / static_cast<double>(m), m);
  Eigen::ArrayXd truth(static_cast<Eigen::Index>(m));
  for (Index i = 0; i < m; ++i) truth(static_cast<Eigen::Index>(i)) = p.density == "ramp" ? 2.0 * xi.coord(i) : 1.0;
  truth *= static_cast<double>(m) / truth.sum();
  const Eigen::ArrayXd weights = truth / static_cast<double>(m);
  const auto P = DiscreteMeasure::from_dense(xi, weights);
  std::vector<Index> cells(m);
  for (Index i = 0; i < m; ++i) cells[i] = i;
  const auto U = DiscreteMeasure::uniform(xi, cells);
  const std::vector<double> wv(weights.begin(), weights.end());

  std::vector<DiscreteMeasure> ps(n);
  std::vector<double> d_p(n), d_u(n);
  parallel_for(n, [&](Index k) {
    ps[k] = p.exact_measures ? P : DiscreteMeasure::from_counts(xi, sample_counts(wv, p.sample_sizes[k], p.seed, k + 1));
    d_p[k] = bounded_lipschitz_distance(ps[k], P);
    d_u[k] = bounded_lipschitz_distance(U, ps[k]);
  });

  // Estimator: histogram MLE under each Q_t, best t by penalized value.
  std::vector<double> l1(n), est_value(n), est_t(n);
  for (Index k = 0; k < n; ++k) {
    est_value[k] = kInf;
    for (double t : p.mixing_grid) {
      const auto q = DiscreteMeasure::mixture(ps[k], U, t);
      const auto dens = histogram_mle(q, bins[k]);
      const ExtReal v = add_conv(expect(q, -dens.log()), ExtReal(theta[k] * t * d_u[k]));
      if (v < ExtReal(est_value[k])) {
        est_value[k] = v.value();
        est_t[k] = t;
        l1[k] = (dens - truth).abs().sum() / static_cast<double>(m);
      }
    }
  }

  // Function-space grid: linear densities 1 + a (2 xi - 1) and their sieve
  // projections, under the L1 metric.
  std::vector<Eigen::ArrayXd> pts;
  auto add_point = [&](const Eigen::ArrayXd& v) {
    for (const auto& q : pts)
      if ((q - v).abs().maxCoeff() <= 1e-12) return;
    pts.push_back(v);
  };
  std::vector<Eigen::ArrayXd> family;
  for (Index j = 0; j < p.family_points; ++j) {
    const double a = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(p.family_points - 1);
    Eigen::ArrayXd v(static_cast<Eigen::Index>(m));
    for (Index i = 0; i < m; ++i) v(static_cast<Eigen::Index>(i)) = 1.0 + a * (2.0 * xi.coord(i) - 1.0);
    family.push_back(v);
  }
  add_point(Eigen::ArrayXd::Ones(static_cast<Eigen::Index>(m)));
  for (const auto& v : family) add_point(v);
  for (Index k = 0; k < n; ++k)
    for (const auto& v : family) add_point(project_to_bins(v, bins[k]));
  const Index nx = pts.size();
  Eigen::MatrixXd dist(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nx));
  for (Index a = 0; a < nx; ++a)
    for (Index b = 0; b < nx; ++b)
      dist(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          (pts[a] - pts[b]).abs().sum() / static_cast<double>(m);
  const auto xg = MetricGrid::from_matrix(dist);

  Eigen::ArrayXXd limit(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(nx));
  for (Index y = 0; y < nx; ++y) limit.col(static_cast<Eigen::Index>(y)) = -pts[y].log();
  ApproximationScheme s;
  s.x_grid = xg;
  s.xi_grid = xi;
  s.p = P;
  s.ps = ps;
  s.integrands.limit = Integrand(limit);
  for (Index k = 0; k < n; ++k) {
    Eigen::ArrayXXd t = limit;
    for (Index y = 0; y < nx; ++y)
      if (!constant_on_bins(pts[y], bins[k])) t.col(static_cast<Eigen::Index>(y)).setConstant(kInf);
    s.integrands.items.emplace_back(t);
  }
  s.schedules.limits.tail_start = default_tail_start(n);
  // Singleton balls: the L1 metric cannot see the pointwise behaviour of -log
  // near small densities, so y -> x is only taken along y = x.
  s.schedules.limits.x_radii.assign(n, 0.5 * xg.min_separation());
  s.complete_schedules();
  s.validate();
  const Index ts = s.schedules.limits.tail_start;

  const auto e = expectation_trace(s);
  const GridFunction phi = expectation_function(s.integrands.limit, P);
  std::vector<GridFunction> profiles(n);
  std::vector<std::vector<double>> t_at(n);
  parallel_for(n, [&](Index k) {
    const auto eu = expectation_function(s.integrands.items[k], U);
    auto pr = mixture_profile(e[k], eu, theta[k], d_u[k], p.mixing_grid);
    profiles[k] = std::move(pr.values);
    t_at[k] = std::move(pr.t_at);
  });
  EpiOptions opt;
  opt.tail_start = ts;
  opt.radii = s.schedules.limits.x_radii;
  opt.recovery_radius = s.schedules.recovery_radius;
  opt.tol = s.schedules.tol;
  const auto aw = aw_trace(profiles, phi, xg, p.rho);

  DiagnosticReport r;
  r.check = "app_sieve";
  r.prefix_length = n;

  PointSetSequence edges{MetricGrid::uniform_1d(0.0, 1.0, m + 1), {}};
  for (Index k = 0; k < n; ++k) edges.sets.push_back(bin_edges(bins[k], m));
  SetLimitSchedule sls{{0.5 / static_cast<double>(m)}, {ts}};
  std::vector<Index> all_edges(m + 1);
  for (Index i = 0; i <= m; ++i) all_edges[i] = i;
  const auto sc = set_converges(edges, all_edges, sls);
  Stage sets{.name = "sieve_set_convergence", .kind = StageKind::hypothesis};
  sets.passed = sc.verdict == Verdict::pass;
  sets.margin = sc.margin;
  sets.witnesses = sc.witnesses;
  sets.detail = {{"bins", bins}, {"edge_sets", to_json(sc)}};
  r.add(std::move(sets));

  std::vector<double> rate(n);
  for (Index k = 0; k < n; ++k) rate[k] = theta[k] * d_p[k];
  r.add(weak_rate_stage(rate));
  append_stages(r, epi_convergence_weak(s), "expectation");
  append_stages(r, check_epi_convergence(profiles, phi, xg, opt), "profile_epi");
  Stage err{.name = "estimator_error", .kind = StageKind::info};
  err.detail = {{"l1_error", l1}, {"mixing_t", est_t}};
  r.add(std::move(err));
  r.finalize();
  r.schedules_used = {{"tail_start", ts},
                      {"tol", opt.tol},
                      {"recovery_radius", opt.recovery_radius},
                      {"bins", bins},
                      {"theta", theta},
                      {"mixing_grid", p.mixing_grid}};
  r.detail = {{"function_grid_size", nx}, {"l1_error", l1}};

  AppRun run{.app = "sieve", .report = r, .trace = {}, .scheme = s, .config = to_json(p)};
  for (Index k = 0; k < n; ++k) run.trace.push_back({nus[k], l1[k], est_value[k], rate[k], aw[k], d_p[k]});
  return run;
}

// ---------------------------------------------------------------------------

AppRun run_mollifier(const MollifierProblem& p) {
  if (p.grid_points < 3) throw std::invalid_argument("mollify: grid_points must be >= 3");
  if (p.terms < 2) throw std::invalid_argument("mollify: terms must be >= 2");
  if (!(p.xi_half_width < p.half_width)) throw std::invalid_argument("mollify: xi_half_width must be < half_width");
  check_mixing_grid(p.mixing_grid);
  const Index n = p.terms;
  std::vector<double> nus(n);
  for (Index k = 0; k < n; ++k) nus[k] = static_cast<double>(k + 1);
  std::vector<double> radii = p.radii;
  if (radii.empty())
    for (Index k = 0; k < n; ++k) radii.push_back(std::ldexp(1.0, -static_cast<int>(k + 1)));
  if (radii.size() != n) throw std::invalid_argument("mollify: radii needs one entry per term");
  const auto theta = resolve_theta(p.theta, nus, 1.0, "mollify");

  const Index nxp = p.grid_points;
  const auto xg = MetricGrid::uniform_1d(-p.half_width, p.half_width, nxp);
  const double dx = 2.0 * p.half_width / static_cast<double>(nxp - 1);
  const Index c = static_cast<Index>(std::llround(p.xi_half_width / dx));
  if (c == 0) throw std::invalid_argument("mollify: xi_half_width below the grid spacing");
  const auto xi = MetricGrid::uniform_1d(-static_cast<double>(c) * dx, static_cast<double>(c) * dx, 2 * c + 1);
  const Index nxi = 2 * c + 1;

  auto g = [&](double x) {
    if (p.g == "step") return x * x + (x > 0.0 ? 1.0 : 0.0);
    if (p.g == "double_well") return (x * x - 0.25) * (x * x - 0.25);
    return x * x;
  };
  GridFunction gv(static_cast<Eigen::Index>(nxp));
  for (Index i = 0; i < nxp; ++i) gv(static_cast<Eigen::Index>(i)) = g(xg.coord(i));

  // f(xi, x) = g(x + xi) with x + xi clamped to the grid; shifts are exact.
  Eigen::ArrayXXd shifted(static_cast<Eigen::Index>(nxi), static_cast<Eigen::Index>(nxp));
  std::size_t clamped = 0;
  for (Index j = 0; j < nxi; ++j)
    for (Index i = 0; i < nxp; ++i) {
      const long long raw = static_cast<long long>(i) + static_cast<long long>(j) - static_cast<long long>(c);
      const long long idx = std::clamp<long long>(raw, 0, static_cast<long long>(nxp) - 1);
      if (idx != raw) ++clamped;
      shifted(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = gv(idx);
    }

  ApproximationScheme s;
  s.x_grid = xg;
  s.xi_grid = xi;
  s.p = DiscreteMeasure::dirac(xi, c);
  s.ps = mollifier_family(xi, c, radii);
  s.integrands.limit = Integrand(shifted);
  std::vector<GridFunction> gnu(n);
  for (Index k = 0; k < n; ++k) {
    s.integrands.items.emplace_back(shifted + p.bias / nus[k]);
    gnu[k] = gv + p.bias / nus[k];
  }
  s.schedules.limits.tail_start = default_tail_start(n);
  s.complete_schedules();
  s.validate();
  const Index ts = s.schedules.limits.tail_start;
  const double tol = s.schedules.tol;

  std::vector<Index> all_xi(nxi);
  for (Index j = 0; j < nxi; ++j) all_xi[j] = j;
  const auto U = DiscreteMeasure::uniform(xi, all_xi);
  std::vector<double> d_p(n), d_u(n);
  parallel_for(n, [&](Index k) {
    d_p[k] = bounded_lipschitz_distance(s.ps[k], s.p);
    d_u[k] = bounded_lipschitz_distance(U, s.ps[k]);
  });
  const auto e = expectation_trace(s);
  std::vector<GridFunction> profiles(n);
  std::vector<std::vector<double>> t_at(n);
  parallel_for(n, [&](Index k) {
    const auto eu = expectation_function(s.integrands.items[k], U);
    auto pr = mixture_profile(e[k], eu, theta[k], d_u[k], p.mixing_grid);
    profiles[k] = std::move(pr.values);
    t_at[k] = std::move(pr.t_at);
  });

  DiagnosticReport r;
  r.check = "app_mollify";
  r.prefix_length = n;
  std::vector<double> rate(n);
  for (Index k = 0; k < n; ++k) rate[k] = theta[k] * d_p[k];
  r.add(weak_rate_stage(rate));

  Stage lim{.name = "approximations_liminf", .kind = StageKind::hypothesis};
  {
    ExtReal worst = ExtReal::plus_inf();
    for (Index x = 0; x < nxp; ++x) {
      const ExtReal lo = joint_liminf(gnu, xg, x, s.schedules.limits.x_radii, ts);
      const ExtReal gap = sub_conv(lo, ExtReal(gv(static_cast<Eigen::Index>(x))));
      if (gap < worst) worst = gap;
      if (gap < ExtReal(-tol)) {
        lim.passed = false;
        lim.witnesses.push_back("x=" + std::to_string(x));
      }
    }
    lim.margin = worst;
    lim.detail = {{"tol", tol}};
  }
  r.add(std::move(lim));

  Stage dom{.name = "domination_and_convergence", .kind = StageKind::hypothesis};
  {
    const double sup = (gnu.back() - gv).abs().maxCoeff();
    dom.passed = gv.isFinite().all() && sup <= tol;
    dom.lhs = ExtReal(sup);
    dom.rhs = ExtReal(tol);
    dom.margin = ExtReal(tol - sup);
    dom.detail = {{"sup_gap_at_last_nu", sup}, {"bound", gv.abs().maxCoeff() + std::abs(p.bias)}};
  }
  r.add(std::move(dom));

  Stage below{.name = "bounded_below", .kind = StageKind::hypothesis};
  below.passed = shifted.isFinite().all();
  below.lhs = ExtReal(shifted.minCoeff());
  below.detail = {{"min_value", shifted.minCoeff()}};
  r.add(std::move(below));

  append_stages(r, epi_convergence_weak(s), "expectation");
  const auto opt = default_epi_options(n, xg, gv);
  append_stages(r, check_epi_convergence(profiles, gv, xg, opt), "profile_epi");
  append_stages(r, check_minimizer_transfer(profiles, gv, xg, ts, opt.tol), "minimizer");
  r.finalize();
  r.schedules_used = {{"tail_start", ts}, {"tol", opt.tol}, {"radii", radii}, {"theta", theta},
                      {"mixing_grid", p.mixing_grid}};
  r.detail = {{"clamped_shifts", clamped}, {"xi_points", nxi}};

  const auto aw = aw_trace(profiles, gv, xg, p.rho);
  AppRun run{.app = "mollify", .report = r, .trace = {}, .scheme = s, .config = to_json(p)};
  for (Index k = 0; k < n; ++k) {
    const Index a = argmin_index(profiles[k]);
    run.trace.push_back({nus[k], xg.coord(a), profiles[k](static_cast<Eigen::Index>(a)), rate[k], aw[k], d_p[k]});
  }
  return run;
}

// ---------------------------------------------------------------------------

Eigen::ArrayXd solve_two_point(double xi, double x, std::size_t intervals) {
  if (intervals < 2) throw std::invalid_argument("solve_two_point: need at least 2 intervals");
  const Index n = intervals;
  const double h = 1.0 / static_cast<double>(n);
  Eigen::ArrayXd u = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(n + 1));
  u(static_cast<Eigen::Index>(n)) = -xi * x;
  // Thomas sweep on the tridiagonal (-1, 2, -1) system of the interior nodes.
  const Index m = n - 1;
  std::vector<double> cp(m), dp(m);
  for (Index i = 0; i < m; ++i) {
    const double t = static_cast<double>(i + 1) * h;
    double rhs = h * h * xi * std::sin(std::numbers::pi * t);
    if (i + 1 == m) rhs += u(static_cast<Eigen::Index>(n));
    const double denom = 2.0 + (i > 0 ? cp[i - 1] : 0.0);
    if (std::abs(denom) < 1e-300) throw std::runtime_error("solve_two_point: singular system");
    cp[i] = -1.0 / denom;
    dp[i] = (rhs + (i > 0 ? dp[i - 1] : 0.0)) / denom;
  }
  for (Index i = m; i-- > 0;) {
    const double next = i + 1 < m ? u(static_cast<Eigen::Index>(i + 2)) : 0.0;
    u(static_cast<Eigen::Index>(i + 1)) = dp[i] - cp[i] * next;
  }
  return u;
}

std::vector<double> analytic_errors(const std::vector<std::size_t>& meshes) {
  std::vector<double> out;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  for (auto n : meshes) {
    const auto u = solve_two_point(1.0, 0.0, n);
    double e = 0.0;
    for (Index i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(n);
      e = std::max(e, std::abs(u(static_cast<Eigen::Index>(i)) - std::sin(std::numbers::pi * t) / pi2));
    }
    out.push_back(e);
  }
  return out;
}

std::vector<double> observed_orders(const std::vector<std::size_t>& meshes, const std::vector<double>& errors) {
  if (meshes.size() != errors.size()) throw std::invalid_argument("observed_orders: size mismatch");
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < errors.size(); ++k) {
    if (errors[k + 1] == 0.0) {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    out.push_back(std::log(errors[k] / errors[k + 1]) /
                  std::log(static_cast<double>(meshes[k + 1]) / static_cast<double>(meshes[k])));
  }
  return out;
}

namespace {

double trapezoid_of_square(const Eigen::ArrayXd& u) {
  const double h = 1.0 / static_cast<double>(u.size() - 1);
  const double ends = 0.5 * (u(0) * u(0) + u(u.size() - 1) * u(u.size() - 1));
  return h * (u.square().sum() - ends);
}

}  // namespace

AppRun run_pde(const PdeProblem& p) {
  const auto& meshes = p.meshes;
  if (meshes.size() < 2) throw std::invalid_argument("pde: need at least two meshes");
  for (std::size_t k = 0; k < meshes.size(); ++k)
    if (meshes[k] < 2 || (k > 0 && meshes[k] <= meshes[k - 1]))
      throw std::invalid_argument("pde: meshes must be >= 2 and increasing");
  if (p.reference_factor < 1) throw std::invalid_argument("pde: reference_factor must be >= 1");
  const std::size_t n_ref = p.reference_factor * meshes.back();
  for (auto n : meshes)
    if (n_ref % n != 0) throw std::invalid_argument("pde: every mesh must divide the reference mesh");
  if (p.xi_atoms.empty() || p.xi_atoms.size() != p.xi_weights.size())
    throw std::invalid_argument("pde: xi_atoms and xi_weights must have equal nonzero length");
  for (std::size_t j = 1; j < p.xi_atoms.size(); ++j)
    if (!(p.xi_atoms[j] > p.xi_atoms[j - 1])) throw std::invalid_argument("pde: xi_atoms must be increasing");
  if (p.x_points < 2) throw std::invalid_argument("pde: x_points must be >= 2");
  const Index n = meshes.size();
  std::vector<std::uint64_t> samples = p.samples;
  if (samples.empty())
    for (Index k = 0; k < n; ++k) samples.push_back(static_cast<std::uint64_t>(1000000) << (4 * (k + 1)));
  if (samples.size() != n) throw std::invalid_argument("pde: samples needs one entry per mesh");

  const auto xg = MetricGrid::uniform_1d(0.0, p.x_max, p.x_points);
  const Index nxi = p.xi_atoms.size();
  Eigen::MatrixXd coords(static_cast<Eigen::Index>(nxi), 1);
  for (Index j = 0; j < nxi; ++j) coords(static_cast<Eigen::Index>(j), 0) = p.xi_atoms[j];
  const auto xi = MetricGrid::euclidean(coords);
  std::vector<Index> support(nxi);
  for (Index j = 0; j < nxi; ++j) support[j] = j;
  const DiscreteMeasure P(xi, support, p.xi_weights);

  // Tables per mesh plus the reference, and nodal discrepancy against it.
  auto table_for = [&](std::size_t mesh, std::vector<Eigen::ArrayXd>* nodal) {
    Eigen::ArrayXXd t(static_cast<Eigen::Index>(nxi), static_cast<Eigen::Index>(p.x_points));
    for (Index j = 0; j < nxi; ++j)
      for (Index i = 0; i < p.x_points; ++i) {
        const double x = xg.coord(i);
        auto u = solve_two_point(p.xi_atoms[j], x, mesh);
        t(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
            trapezoid_of_square(u) + p.control_weight * x * x;
        if (nodal) nodal->push_back(std::move(u));
      }
    return t;
  };
  std::vector<Eigen::ArrayXd> ref_nodes;
  const auto ref_table = table_for(n_ref, &ref_nodes);
  std::vector<Eigen::ArrayXXd> tables(n);
  std::vector<double> discrepancy(n, 0.0);
  parallel_for(n, [&](Index k) {
    std::vector<Eigen::ArrayXd> nodes;
    tables[k] = table_for(meshes[k], &nodes);
    const std::size_t stride = n_ref / meshes[k];
    double d = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q)
      for (std::size_t i = 0; i <= meshes[k]; ++i)
        d = std::max(d, std::abs(nodes[q](static_cast<Eigen::Index>(i)) -
                                 ref_nodes[q](static_cast<Eigen::Index>(i * stride))));
    discrepancy[k] = d;
  });

  ApproximationScheme s;
  s.x_grid = xg;
  s.xi_grid = xi;
  s.p = P;
  s.integrands.limit = Integrand(ref_table);
  for (Index k = 0; k < n; ++k) s.integrands.items.emplace_back(tables[k]);
  s.ps.resize(n);
  parallel_for(n, [&](Index k) {
    s.ps[k] = DiscreteMeasure::from_counts(xi, sample_counts(p.xi_weights, samples[k], p.seed, k + 1));
  });
  s.schedules.limits.tail_start = default_tail_start(n);
  s.complete_schedules();
  s.validate();
  const Index ts = s.schedules.limits.tail_start;

  const auto e = expectation_trace(s);
  const GridFunction phi = expectation_function(s.integrands.limit, P);
  const auto aw = aw_trace(e, phi, xg, p.rho);
  std::vector<double> d_p(n);
  for (Index k = 0; k < n; ++k) d_p[k] = bounded_lipschitz_distance(s.ps[k], P);

  DiagnosticReport r;
  r.check = "app_pde";
  r.prefix_length = n;

  const auto orders = observed_orders(meshes, discrepancy);
  Stage cc{.name = "continuous_convergence", .kind = StageKind::hypothesis};
  {
    bool decreasing = true;
    for (Index k = 1; k < n; ++k) decreasing = decreasing && (discrepancy[k] < discrepancy[k - 1] || discrepancy[k] == 0.0);
    cc.passed = decreasing && orders.back() >= 1.9;
    cc.lhs = ExtReal(orders.back());
    cc.rhs = ExtReal(1.9);
    cc.margin = ExtReal(orders.back() - 1.9);
    if (!decreasing) cc.witnesses.push_back("nodal discrepancy does not decrease");
    cc.detail = {{"nodal_discrepancy", discrepancy}, {"observed_order", orders}, {"reference_mesh", n_ref}};
  }
  r.add(std::move(cc));

  Stage tails{.name = "tail_conditions", .kind = StageKind::hypothesis};
  {
    double lo = ref_table.minCoeff(), hi = ref_table.maxCoeff();
    for (const auto& t : tables) {
      lo = std::min(lo, t.minCoeff());
      hi = std::max(hi, t.maxCoeff());
    }
    tails.passed = lo >= 0.0 && std::isfinite(hi);
    tails.lhs = ExtReal(lo);
    tails.detail = {{"min_value", lo}, {"max_value", hi}, {"note", "vacuous: integrands are bounded on the grid"}};
  }
  r.add(std::move(tails));

  append_stages(r, epi_convergence_weak(s), "expectation");

  const auto errs = analytic_errors(meshes);
  const auto aorders = observed_orders(meshes, errs);
  Stage ao{.name = "analytic_order", .kind = StageKind::conclusion};
  ao.passed = aorders.back() >= 1.9;
  ao.lhs = ExtReal(aorders.back());
  ao.rhs = ExtReal(1.9);
  ao.margin = ExtReal(aorders.back() - 1.9);
  ao.detail = {{"errors", errs}, {"observed_order", aorders}};
  r.add(std::move(ao));

  Stage awd{.name = "epi_distance_decreasing", .kind = StageKind::conclusion};
  for (Index k = 1; k < n; ++k)
    if (!(aw[k] < aw[k - 1])) {
      awd.passed = false;
      awd.witnesses.push_back("nu=" + std::to_string(k + 1));
    }
  awd.detail = {{"epi_distance", aw}};
  r.add(std::move(awd));

  append_stages(r, check_minimizer_transfer(e, phi, xg, ts, s.schedules.tol), "minimizer");
  r.finalize();

  double second_moment = 0.0;
  for (Index j = 0; j < nxi; ++j) second_moment += p.xi_weights[j] * p.xi_atoms[j] * p.xi_atoms[j];
  const double pi3 = std::pow(std::numbers::pi, 3);
  const double x_star = (2.0 * second_moment / pi3) / (2.0 * second_moment / 3.0 + 2.0 * p.control_weight);
  r.schedules_used = {{"tail_start", ts}, {"tol", s.schedules.tol}, {"samples", samples}};
  r.detail = {{"closed_form_minimizer", x_star}};

  AppRun run{.app = "pde", .report = r, .trace = {}, .scheme = s, .config = to_json(p)};
  for (Index k = 0; k < n; ++k) {
    const Index a = argmin_index(e[k]);
    run.trace.push_back({static_cast<double>(meshes[k]), xg.coord(a), e[k](static_cast<Eigen::Index>(a)),
                         discrepancy[k], aw[k], d_p[k]});
  }
  return run;
}

// ---------------------------------------------------------------------------

std::vector<Index> constraint_qualification_failures(const GridFunction& constraint, const MetricGrid& grid,
                                                     double tol) {
  std::vector<Index> out;
  const double sp = grid.spacing();
  for (Index i = 0; i < grid.size(); ++i) {
    if (!(std::abs(constraint(static_cast<Eigen::Index>(i))) <= tol)) continue;
    bool strict = false;
    for (Index j : grid.ball(i, sp))
      if (j != i && constraint(static_cast<Eigen::Index>(j)) < -tol) strict = true;
    if (!strict) out.push_back(i);
  }
  return out;
}

AppRun run_penalty(const PenaltyProblem& p) {
  if (p.x_points < 3) throw std::invalid_argument("penalty: x_points must be >= 3");
  if (p.terms < 2) throw std::invalid_argument("penalty: terms must be >= 2");
  if (p.xi_offsets.empty() || p.xi_offsets.size() != p.xi_weights.size())
    throw std::invalid_argument("penalty: xi_offsets and xi_weights must have equal nonzero length");
  for (std::size_t j = 1; j < p.xi_offsets.size(); ++j)
    if (!(p.xi_offsets[j] > p.xi_offsets[j - 1])) throw std::invalid_argument("penalty: xi_offsets must be increasing");
  const Index n = p.terms;
  std::vector<double> nus(n);
  for (Index k = 0; k < n; ++k) nus[k] = static_cast<double>(k + 1);
  const auto theta = resolve_theta(p.theta, nus, 1.0, "penalty");

  const auto xg = MetricGrid::uniform_1d(-p.x_half_width, p.x_half_width, p.x_points);
  const Index nxi = p.xi_offsets.size();
  Eigen::MatrixXd coords(static_cast<Eigen::Index>(nxi), 1);
  for (Index j = 0; j < nxi; ++j) coords(static_cast<Eigen::Index>(j), 0) = p.m + p.xi_offsets[j];
  const auto xi = MetricGrid::euclidean(coords);
  std::vector<Index> support(nxi);
  for (Index j = 0; j < nxi; ++j) support[j] = j;
  const DiscreteMeasure P(xi, support, p.xi_weights);

  // f(xi, x) = xi - x, so E^P[f](x) = m - x and feasibility is x >= m.
  Eigen::ArrayXXd table(static_cast<Eigen::Index>(nxi), static_cast<Eigen::Index>(p.x_points));
  for (Index j = 0; j < nxi; ++j)
    for (Index i = 0; i < p.x_points; ++i)
      table(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = xi.coord(j) - xg.coord(i);

  ApproximationScheme s;
  s.x_grid = xg;
  s.xi_grid = xi;
  s.p = P;
  s.integrands.limit = Integrand(table);
  s.integrands.items.assign(n, Integrand(table));
  s.ps.resize(n);
  parallel_for(n, [&](Index k) {
    s.ps[k] = p.exact_measures
                  ? P
                  : DiscreteMeasure::from_counts(xi, sample_counts(p.xi_weights, p.samples_per_nu * (k + 1), p.seed,
                                                                   k + 1));
  });
  s.schedules.limits.tail_start = default_tail_start(n);
  s.complete_schedules();
  s.validate();
  const Index ts = s.schedules.limits.tail_start;

  const auto e = expectation_trace(s);
  const GridFunction c = expectation_function(s.integrands.limit, P);
  GridFunction phi(static_cast<Eigen::Index>(p.x_points));
  for (Index i = 0; i < p.x_points; ++i) {
    const double x = xg.coord(i);
    phi(static_cast<Eigen::Index>(i)) = c(static_cast<Eigen::Index>(i)) <= p.cq_tol ? x * x : kInf;
  }
  std::vector<GridFunction> phis(n);
  for (Index k = 0; k < n; ++k) {
    phis[k] = GridFunction(static_cast<Eigen::Index>(p.x_points));
    for (Index i = 0; i < p.x_points; ++i) {
      const double x = xg.coord(i);
      phis[k](static_cast<Eigen::Index>(i)) = x * x + theta[k] * std::max(0.0, e[k](static_cast<Eigen::Index>(i)));
    }
  }
  const auto opt = default_epi_options(n, xg, phi);

  DiagnosticReport r;
  r.check = "app_penalty";
  r.prefix_length = n;

  const auto cq = constraint_qualification_failures(c, xg, p.cq_tol);
  Stage cqs{.name = "constraint_qualification", .kind = StageKind::hypothesis};
  cqs.passed = cq.empty();
  for (Index i : cq) cqs.witnesses.push_back("x=" + std::to_string(i) + " boundary point without strictly feasible neighbour");
  cqs.margin = ExtReal(cq.empty() ? 0.0 : -static_cast<double>(cq.size()));
  cqs.detail = {{"cq_tol", p.cq_tol}};
  r.add(std::move(cqs));

  append_stages(r, epi_convergence_weak(s), "expectation");
  append_stages(r, check_epi_convergence(phis, phi, xg, opt), "penalty_epi");

  // Recovery by cases: strictly feasible x keeps x^nu = x; boundary x moves to
  // the nearest strictly feasible point within one spacing.
  Stage rc{.name = "recovery_cases", .kind = StageKind::conclusion};
  {
    std::size_t case_a = 0, case_b = 0;
    std::vector<Index> skipped;
    double worst = 0.0;
    for (Index i = 0; i < p.x_points; ++i) {
      const double target = phi(static_cast<Eigen::Index>(i));
      if (std::isinf(target)) continue;
      Index bar = i;
      if (c(static_cast<Eigen::Index>(i)) < -p.cq_tol) {
        ++case_a;
      } else {
        bool found = false;
        double best = kInf;
        for (Index j : xg.ball(i, opt.recovery_radius))
          if (c(static_cast<Eigen::Index>(j)) < -p.cq_tol && xg.distance(i, j) < best) {
            best = xg.distance(i, j);
            bar = j;
            found = true;
          }
        if (!found) {
          skipped.push_back(i);  // reported under constraint_qualification
          continue;
        }
        ++case_b;
      }
      double up = -kInf;
      for (Index k = ts; k < n; ++k) up = std::max(up, phis[k](static_cast<Eigen::Index>(bar)));
      const double excess = up - target;
      worst = std::max(worst, excess);
      if (!(excess <= opt.tol)) {
        rc.passed = false;
        rc.witnesses.push_back("x=" + std::to_string(i));
      }
    }
    rc.lhs = ExtReal(worst);
    rc.rhs = ExtReal(opt.tol);
    rc.margin = ExtReal(opt.tol - worst);
    rc.detail = {{"strictly_feasible", case_a}, {"boundary", case_b}, {"skipped_without_cq", skipped}};
  }
  r.add(std::move(rc));
  append_stages(r, check_minimizer_transfer(phis, phi, xg, ts, opt.tol), "minimizer");
  r.finalize();
  const double x_star = std::clamp(std::max(0.0, p.m), -p.x_half_width, p.x_half_width);
  r.schedules_used = {{"tail_start", ts}, {"tol", opt.tol}, {"theta", theta}};
  r.detail = {{"closed_form_minimizer", x_star}, {"closed_form_value", x_star * x_star}};

  const auto aw = aw_trace(phis, phi, xg, p.rho);
  AppRun run{.app = "penalty", .report = r, .trace = {}, .scheme = s, .config = to_json(p)};
  for (Index k = 0; k < n; ++k) {
    const Index a = argmin_index(phis[k]);
    const double viol = std::max(0.0, e[k](static_cast<Eigen::Index>(a)));
    run.trace.push_back({nus[k], xg.coord(a), phis[k](static_cast<Eigen::Index>(a)), viol, aw[k],
                         bounded_lipschitz_distance(s.ps[k], P)});
  }
  return run;
}

}  // namespace epikit
