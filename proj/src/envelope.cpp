#include "epikit/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace epikit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_inputs(const GridFunction& h, const MetricGrid& grid, double kappa) {
  if (!(kappa >= 0.0) || std::isinf(kappa)) throw std::invalid_argument("envelope: kappa must be finite and >= 0");
  if (static_cast<Index>(h.size()) != grid.size()) throw std::invalid_argument("envelope: size mismatch");
  if (h.isNaN().any()) throw std::invalid_argument("envelope: NaN value");
}

void fill_flags(EnvelopeResult& r, const GridFunction& h) {
  r.all_infinite = (h == kInf).all();
  r.has_minus_inf = (h == -kInf).any();
}

}  // namespace

EnvelopeResult pasch_hausdorff_brute(const GridFunction& h, const MetricGrid& grid, double kappa) {
  check_inputs(h, grid, kappa);
  const Index n = grid.size();
  EnvelopeResult r;
  r.kappa = kappa;
  r.values.resize(static_cast<Eigen::Index>(n));
  r.attained_at.assign(n, 0);
  for (Index i = 0; i < n; ++i) {
    double best = kInf;
    Index arg = 0;
    bool have = false;
    for (Index j = 0; j < n; ++j) {
      const double v = h(static_cast<Eigen::Index>(j)) + kappa * grid.distance(i, j);
      if (!have || v < best) {
        best = v;
        arg = j;
        have = true;
      }
    }
    r.values(static_cast<Eigen::Index>(i)) = best;
    r.attained_at[i] = arg;
  }
  fill_flags(r, h);
  return r;
}

EnvelopeResult pasch_hausdorff_scan(const GridFunction& h, const MetricGrid& grid, double kappa) {
  check_inputs(h, grid, kappa);
  if (!grid.is_sorted_1d()) throw std::invalid_argument("pasch_hausdorff_scan: needs a sorted 1-D grid");
  const Index n = grid.size();
  EnvelopeResult r;
  r.kappa = kappa;
  r.values.resize(static_cast<Eigen::Index>(n));
  r.attained_at.assign(n, 0);
  if (n == 0) return r;

  // Forward pass: best candidate among indices <= i; ties keep the earlier one.
  std::vector<double> fv(n);
  std::vector<Index> fj(n);
  fv[0] = h(0);
  fj[0] = 0;
  for (Index i = 1; i < n; ++i) {
    const double carried = fv[i - 1] + kappa * (grid.coord(i) - grid.coord(i - 1));
    const double own = h(static_cast<Eigen::Index>(i));
    if (own < carried) {
      fv[i] = own;
      fj[i] = i;
    } else {
      fv[i] = carried;
      fj[i] = fj[i - 1];
    }
  }
  // Backward pass: indices >= i; ties prefer the smaller index.
  double bv = kInf;
  Index bj = n - 1;
  for (Index k = n; k-- > 0;) {
    const double own = h(static_cast<Eigen::Index>(k));
    const double carried = (k + 1 < n) ? bv + kappa * (grid.coord(k + 1) - grid.coord(k)) : kInf;
    if (k + 1 == n || own <= carried) {
      bv = own;
      bj = k;
    } else {
      bv = carried;
    }
    const Index j = (bv < fv[k]) ? bj : fj[k];
    r.attained_at[k] = j;
    // Recompute from the chosen candidate so the value is a genuine candidate.
    r.values(static_cast<Eigen::Index>(k)) = h(static_cast<Eigen::Index>(j)) + kappa * std::abs(grid.coord(k) - grid.coord(j));
  }
  fill_flags(r, h);
  return r;
}

EnvelopeResult pasch_hausdorff(const GridFunction& h, const MetricGrid& grid, double kappa) {
  return grid.is_sorted_1d() ? pasch_hausdorff_scan(h, grid, kappa) : pasch_hausdorff_brute(h, grid, kappa);
}

Integrand envelope_of_integrand(const Integrand& f, const MetricGrid& x_grid, double kappa) {
  Eigen::ArrayXXd t(f.table().rows(), f.table().cols());
  for (Index xi = 0; xi < f.xi_size(); ++xi)
    t.row(static_cast<Eigen::Index>(xi)) = pasch_hausdorff(f.slice(xi), x_grid, kappa).values.transpose();
  return Integrand(std::move(t));
}

std::vector<double> default_kappa_schedule(double scale) {
  std::vector<double> k;
  for (int e = 0; e <= 10; ++e) k.push_back(std::ldexp(scale, e));
  return k;
}

std::vector<double> kappa_schedule_for(const GridFunction& h, const MetricGrid& grid) {
  double lo = kInf, hi = -kInf;
  for (Eigen::Index i = 0; i < h.size(); ++i)
    if (std::isfinite(h(i))) {
      lo = std::min(lo, h(i));
      hi = std::max(hi, h(i));
    }
  const double range = (hi > lo) ? hi - lo : 1.0;
  const double sep = grid.min_separation() > 0.0 ? grid.min_separation() : 1.0;
  // The top of the schedule is at least range / sep, rounded up to a power of two.
  const double top = std::exp2(std::ceil(std::log2(std::max(range / sep, 1.0))));
  return default_kappa_schedule(top / 1024.0);
}

std::optional<MinorantAnchor> find_linear_minorant(const GridFunction& h, const MetricGrid& grid,
                                                   const std::vector<double>& slopes) {
  if ((h == -kInf).any()) return std::nullopt;
  for (double a : slopes)
    for (Index c = 0; c < grid.size(); ++c) {
      double m = kInf;
      for (Index i = 0; i < grid.size(); ++i) m = std::min(m, h(static_cast<Eigen::Index>(i)) + a * grid.distance(i, c));
      if (m > -kInf) return MinorantAnchor{c, a, std::isfinite(m) ? -m : 0.0};
    }
  return std::nullopt;
}

DiagnosticReport check_envelope_convergence(const GridFunction& h, const MetricGrid& grid,
                                            const std::vector<double>& kappas, const std::vector<double>& radii,
                                            double tol) {
  if (kappas.empty()) throw std::invalid_argument("check_envelope_convergence: empty kappa schedule");
  DiagnosticReport r;
  r.check = "envelope_convergence";
  r.prefix_length = kappas.size();
  r.schedules_used = {{"kappas", kappas}, {"radii", radii}, {"tol", tol}};

  const auto anchor = find_linear_minorant(h, grid, kappas);
  Stage hyp{.name = "linear_minorant", .kind = StageKind::hypothesis, .passed = anchor.has_value()};
  if (anchor) hyp.detail = {{"center", anchor->center}, {"slope", anchor->slope}, {"offset", anchor->offset}};
  else hyp.witnesses.push_back("no anchored linear minorant found on the grid");
  r.add(std::move(hyp));

  std::vector<GridFunction> env;
  for (double k : kappas) env.push_back(pasch_hausdorff(h, grid, k).values);
  const GridFunction reg = lower_regularize(h, grid, radii);

  Stage mono{.name = "monotone_in_kappa", .kind = StageKind::conclusion};
  for (std::size_t k = 0; k < env.size(); ++k) {
    const GridFunction& upper = (k + 1 < env.size()) ? env[k + 1] : reg;
    for (Index i = 0; i < grid.size(); ++i)
      if (env[k](static_cast<Eigen::Index>(i)) > upper(static_cast<Eigen::Index>(i))) {
        mono.passed = false;
        mono.witnesses.push_back("kappa=" + to_string(ExtReal(kappas[k])) + " x=" + std::to_string(i));
      }
  }
  r.add(std::move(mono));

  Stage gap{.name = "gap_at_kappa_max", .kind = StageKind::conclusion};
  const GridFunction& top = env.back();
  double worst = 0.0;
  for (Index i = 0; i < grid.size(); ++i) {
    const auto e = static_cast<Eigen::Index>(i);
    if (std::isfinite(reg(e))) {
      const double g = reg(e) - top(e);
      worst = std::max(worst, g);
      if (!(g <= tol)) {
        gap.passed = false;
        gap.witnesses.push_back("x=" + std::to_string(i));
      }
    } else if (reg(e) == kInf) {
      const bool rising = top(e) == kInf || (env.size() >= 2 && top(e) > env[env.size() - 2](e));
      if (!rising) {
        gap.passed = false;
        gap.witnesses.push_back("x=" + std::to_string(i) + " not rising towards +inf");
      }
    }
  }
  gap.lhs = ExtReal(-worst);
  gap.rhs = ExtReal(-tol);
  gap.margin = ExtReal(tol - worst);
  r.add(std::move(gap));
  r.finalize();
  return r;
}

DiagnosticReport envelope_liminf_identity(const std::vector<GridFunction>& hs, const MetricGrid& grid, Index x,
                                          const std::vector<double>& kappas, const std::vector<double>& radii,
                                          Index tail_start, double bound) {
  if (hs.empty() || tail_start >= hs.size()) throw std::invalid_argument("envelope_liminf_identity: bad tail start");
  if (kappas.empty()) throw std::invalid_argument("envelope_liminf_identity: empty kappa schedule");
  DiagnosticReport r;
  r.check = "envelope_liminf_identity";
  r.prefix_length = hs.size();
  r.schedules_used = {{"kappas", kappas}, {"radii", radii}, {"tail_start", tail_start}, {"bound", bound}};

  const Index n = hs.size();
  // env[kappa][nu]
  std::vector<std::vector<GridFunction>> env(kappas.size());
  for (std::size_t k = 0; k < kappas.size(); ++k)
    for (Index nu = 0; nu < n; ++nu) env[k].push_back(pasch_hausdorff(hs[nu], grid, kappas[k]).values);

  Stage hyp{.name = "envelope_bounded_below", .kind = StageKind::hypothesis, .passed = false};
  for (std::size_t k = 0; k < kappas.size() && !hyp.passed; ++k)
    for (Index x0 = 0; x0 < grid.size() && !hyp.passed; ++x0) {
      std::vector<ExtReal> seq;
      for (Index nu = 0; nu < n; ++nu) seq.emplace_back(env[k][nu](static_cast<Eigen::Index>(x0)));
      if (liminf_seq(seq, tail_start) > ExtReal::minus_inf() && !diverges_down(seq, tail_start)) {
        hyp.passed = true;
        hyp.detail = {{"kappa", kappas[k]}, {"x", x0}};
      }
    }
  if (!hyp.passed) hyp.witnesses.push_back("every scheduled envelope tail diverges to -inf; identity skipped");
  const bool gate = hyp.passed;
  r.add(std::move(hyp));

  const ExtReal lhs = joint_liminf(hs, grid, x, radii, tail_start);
  ExtReal rhs = ExtReal::minus_inf();
  for (std::size_t k = 0; k < kappas.size(); ++k) {
    std::vector<ExtReal> seq;
    for (Index nu = 0; nu < n; ++nu) seq.emplace_back(env[k][nu](static_cast<Eigen::Index>(x)));
    rhs = max(rhs, liminf_seq(seq, tail_start));
  }
  Stage id{.name = "identity", .kind = gate ? StageKind::conclusion : StageKind::info};
  id.lhs = lhs;
  id.rhs = rhs;
  id.passed = approx_equal(lhs, rhs, bound);
  id.margin = (lhs.is_finite() && rhs.is_finite()) ? ExtReal(-std::abs(lhs.value() - rhs.value()))
                                                   : ExtReal(id.passed ? 0.0 : -kInf);
  if (!gate) id.detail = {{"skipped", "hypothesis unverified"}};
  r.add(std::move(id));
  r.finalize();
  return r;
}

DiagnosticReport interchange_inequality(const Integrand& f, const DiscreteMeasure& p, const MetricGrid& x_grid,
                                        double kappa) {
  DiagnosticReport r;
  r.check = "interchange_inequality";
  r.prefix_length = 1;
  r.schedules_used = {{"kappa", kappa}};
  const GridFunction lhs = expectation_function(envelope_of_integrand(f, x_grid, kappa), p);
  const GridFunction rhs = pasch_hausdorff(expectation_function(f, p), x_grid, kappa).values;
  Stage s{.name = "expected_envelope_below_envelope_of_expectation", .kind = StageKind::conclusion};
  ExtReal worst(0.0);
  bool equal = true;
  for (Index i = 0; i < x_grid.size(); ++i) {
    const ExtReal a(lhs(static_cast<Eigen::Index>(i)));
    const ExtReal b(rhs(static_cast<Eigen::Index>(i)));
    equal = equal && a == b;
    if (a <= b) continue;
    const ExtReal v = sub_conv(a, b);
    if (v > worst) {
      worst = v;
      s.lhs = a;
      s.rhs = b;
    }
    if (v > ExtReal(1e-9)) {
      s.passed = false;
      s.witnesses.push_back("x=" + std::to_string(i));
    }
  }
  s.margin = worst.is_plus_inf() ? ExtReal::minus_inf() : ExtReal(-worst.value());
  s.detail = {{"max_violation", to_json(worst)}, {"exact_equality", equal}};
  r.add(std::move(s));
  r.finalize();
  return r;
}

nlohmann::json to_json(const EnvelopeResult& r) {
  return {{"kappa", r.kappa},
          {"values", grid_function_to_json(r.values)},
          {"attained_at", r.attained_at},
          {"all_infinite", r.all_infinite},
          {"has_minus_inf", r.has_minus_inf}};
}

}  // namespace epikit
