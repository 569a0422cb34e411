#include "epikit/integrand.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace epikit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string point_label(const char* what, Index i) { return std::string(what) + "=" + std::to_string(i); }

}  // namespace

Integrand::Integrand(Eigen::ArrayXXd values) : values_(std::move(values)) {
  if (values_.isNaN().any()) throw std::invalid_argument("Integrand: NaN entry");
}

void IntegrandSequence::validate() const {
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k].xi_size() != limit.xi_size() || items[k].x_size() != limit.x_size())
      throw std::invalid_argument("IntegrandSequence: item " + std::to_string(k + 1) + " has the wrong shape");
  }
}

std::vector<double> shrinking_radii(Index n_terms, const MetricGrid& grid) {
  std::vector<double> r(n_terms);
  const double h = grid.spacing();
  for (Index k = 0; k < n_terms; ++k) r[k] = 2.0 * h / static_cast<double>(k + 1);
  return r;
}

LimitSchedule default_limit_schedule(Index n_terms, const MetricGrid& x_grid, const MetricGrid& xi_grid) {
  LimitSchedule s;
  s.tail_start = n_terms - std::max<Index>(1, n_terms / 4);
  s.x_radii = shrinking_radii(n_terms, x_grid);
  s.xi_radii = shrinking_radii(n_terms, xi_grid);
  return s;
}

namespace {

template <typename Pick>
ExtReal joint_extreme(const std::vector<GridFunction>& values, const MetricGrid& grid, Index x,
                      const std::vector<double>& radii, Index tail_start, ExtReal init, Pick pick) {
  if (tail_start >= values.size()) throw std::invalid_argument("joint limit: tail start past the end");
  if (radii.size() < values.size()) throw std::invalid_argument("joint limit: radius schedule too short");
  ExtReal best = init;
  for (Index k = tail_start; k < values.size(); ++k) {
    for (Index y : grid.ball(x, radii[k])) best = pick(best, ExtReal(values[k](static_cast<Eigen::Index>(y))));
  }
  return best;
}

}  // namespace

ExtReal joint_liminf(const std::vector<GridFunction>& values, const MetricGrid& grid, Index x,
                     const std::vector<double>& radii, Index tail_start) {
  return joint_extreme(values, grid, x, radii, tail_start, ExtReal::plus_inf(),
                       [](ExtReal a, ExtReal b) { return min(a, b); });
}

ExtReal joint_limsup(const std::vector<GridFunction>& values, const MetricGrid& grid, Index x,
                     const std::vector<double>& radii, Index tail_start) {
  return joint_extreme(values, grid, x, radii, tail_start, ExtReal::minus_inf(),
                       [](ExtReal a, ExtReal b) { return max(a, b); });
}

bool diverges_up(const std::vector<ExtReal>& seq, Index tail_start) {
  if (tail_start >= seq.size()) return false;
  bool all_inf = true;
  for (Index k = tail_start; k < seq.size(); ++k) all_inf = all_inf && seq[k].is_plus_inf();
  if (all_inf) return true;
  const Index len = seq.size() - tail_start;
  if (len < 2) return false;
  const Index mid = tail_start + len / 2;
  ExtReal first = ExtReal::plus_inf();
  ExtReal second = ExtReal::plus_inf();
  for (Index k = tail_start; k < mid; ++k) first = min(first, seq[k]);
  for (Index k = mid; k < seq.size(); ++k) second = min(second, seq[k]);
  return second > first;
}

bool diverges_down(const std::vector<ExtReal>& seq, Index tail_start) {
  if (tail_start >= seq.size()) return false;
  for (Index k = tail_start; k < seq.size(); ++k)
    if (seq[k].is_minus_inf()) return true;
  if (seq.size() - tail_start < 3) return false;
  double first_step = 0.0;
  double last_step = 0.0;
  for (Index k = tail_start + 1; k < seq.size(); ++k) {
    if (!seq[k].is_finite() || !seq[k - 1].is_finite()) return false;
    const double step = seq[k - 1].value() - seq[k].value();
    if (!(step > 0.0)) return false;
    if (k == tail_start + 1) first_step = step;
    last_step = step;
  }
  return last_step >= first_step * (1.0 - 1e-9);
}

ExtReal expect(const DiscreteMeasure& p, const GridFunction& h) {
  if (static_cast<Index>(h.size()) != p.grid().size())
    throw std::invalid_argument("expect: function and measure live on different grids");
  double plus = 0.0;
  double minus = 0.0;
  const auto& sup = p.support();
  const auto& w = p.weights();
  for (std::size_t k = 0; k < sup.size(); ++k) {
    if (w[k] == 0.0) continue;
    const double v = h(static_cast<Eigen::Index>(sup[k]));
    if (v > 0.0) plus += w[k] * v;
    else if (v < 0.0) minus += w[k] * (-v);
  }
  return sub_conv(ExtReal(plus), ExtReal(minus));
}

ExtReal expectation(const Integrand& f, const DiscreteMeasure& p, Index x) {
  if (f.xi_size() != p.grid().size()) throw std::invalid_argument("expectation: Xi-grid size mismatch");
  double plus = 0.0;
  double minus = 0.0;
  const auto& sup = p.support();
  const auto& w = p.weights();
  const auto col = static_cast<Eigen::Index>(x);
  for (std::size_t k = 0; k < sup.size(); ++k) {
    if (w[k] == 0.0) continue;
    const double v = f.table()(static_cast<Eigen::Index>(sup[k]), col);
    if (v > 0.0) plus += w[k] * v;
    else if (v < 0.0) minus += w[k] * (-v);
  }
  return sub_conv(ExtReal(plus), ExtReal(minus));
}

GridFunction expectation_function(const Integrand& f, const DiscreteMeasure& p) {
  GridFunction out(static_cast<Eigen::Index>(f.x_size()));
  for (Index x = 0; x < f.x_size(); ++x) out(static_cast<Eigen::Index>(x)) = expectation(f, p, x).value();
  return out;
}

ExtReal tail_expectation_below(const DiscreteMeasure& p, const GridFunction& h, double K) {
  double minus = 0.0;
  const auto& sup = p.support();
  const auto& w = p.weights();
  for (std::size_t k = 0; k < sup.size(); ++k) {
    const double v = h(static_cast<Eigen::Index>(sup[k]));
    if (w[k] == 0.0 || !(v <= -K)) continue;
    if (v < 0.0) minus += w[k] * (-v);
  }
  return sub_conv(ExtReal(0.0), ExtReal(minus));
}

ExtReal tail_expectation_above(const DiscreteMeasure& p, const GridFunction& h, double K) {
  double plus = 0.0;
  const auto& sup = p.support();
  const auto& w = p.weights();
  for (std::size_t k = 0; k < sup.size(); ++k) {
    const double v = h(static_cast<Eigen::Index>(sup[k]));
    if (w[k] == 0.0 || !(v >= K)) continue;
    if (v > 0.0) plus += w[k] * v;
  }
  return ExtReal(plus);
}

ExtReal tail_expectation_below(const Integrand& f, const DiscreteMeasure& p, Index x, double K) {
  return tail_expectation_below(p, f.column(x), K);
}

ExtReal tail_expectation_above(const Integrand& f, const DiscreteMeasure& p, Index x, double K) {
  return tail_expectation_above(p, f.column(x), K);
}

std::vector<double> default_regularization_radii(const MetricGrid& grid) {
  const double h = grid.spacing();
  return {4.0 * h, 2.0 * h, h, 0.5 * grid.min_separation()};
}

GridFunction lower_regularize(const GridFunction& h, const MetricGrid& grid, const std::vector<double>& radii) {
  if (radii.empty()) throw std::invalid_argument("lower_regularize: empty radius schedule");
  const Index n = grid.size();
  GridFunction out(static_cast<Eigen::Index>(n));
  for (Index i = 0; i < n; ++i) {
    double best = -kInf;
    for (double r : radii) {
      double m = kInf;
      for (Index j : grid.ball(i, r)) m = std::min(m, h(static_cast<Eigen::Index>(j)));
      best = std::max(best, m);
    }
    out(static_cast<Eigen::Index>(i)) = best;
  }
  return out;
}

GridFunction upper_regularize(const GridFunction& h, const MetricGrid& grid, const std::vector<double>& radii) {
  GridFunction neg = -h;
  return -lower_regularize(neg, grid, radii);
}

DiagnosticReport check_lsc(const GridFunction& h, const MetricGrid& grid, const std::vector<double>& radii,
                           double tol) {
  DiagnosticReport r;
  r.check = "lsc";
  r.prefix_length = 1;
  r.schedules_used = {{"radii", radii}, {"tol", tol}};
  const GridFunction lo = lower_regularize(h, grid, radii);
  Stage s{.name = "regularization_matches", .kind = StageKind::conclusion};
  ExtReal worst = ExtReal::plus_inf();
  for (Index i = 0; i < grid.size(); ++i) {
    const ExtReal a(lo(static_cast<Eigen::Index>(i)));
    const ExtReal b(h(static_cast<Eigen::Index>(i)));
    const ExtReal m = (a == b) ? ExtReal(0.0) : sub_conv(a, b);
    if (m < worst) {
      worst = m;
      s.lhs = a;
      s.rhs = b;
    }
    if (!approx_equal(a, b, tol)) {
      s.passed = false;
      s.witnesses.push_back(point_label("x", i));
    }
  }
  s.margin = worst.is_plus_inf() ? ExtReal(0.0) : worst;
  r.add(std::move(s));
  r.finalize();
  return r;
}

DiagnosticReport check_equi_lsc(const std::vector<GridFunction>& fs, const MetricGrid& xi_grid,
                                const std::vector<Index>& atoms, const std::vector<double>& eps_list,
                                const std::vector<double>& delta_list, Index tail_start) {
  DiagnosticReport r;
  r.check = "equi_lsc";
  r.prefix_length = fs.size();
  r.schedules_used = {{"eps", eps_list}, {"delta", delta_list}, {"tail_start", tail_start}};
  if (tail_start >= fs.size()) throw std::invalid_argument("check_equi_lsc: tail start past the end");
  Stage s{.name = "equi_lsc_at_atoms", .kind = StageKind::conclusion};
  for (Index xi : atoms) {
    for (double eps : eps_list) {
      bool found = false;
      for (double delta : delta_list) {
        bool ok = true;
        for (Index k = tail_start; k < fs.size() && ok; ++k) {
          const double base = fs[k](static_cast<Eigen::Index>(xi));
          if (base == -kInf) continue;
          // For an infinite centre value the requirement is f >= 1/eps.
          const double floor = std::isinf(base) ? 1.0 / eps : base - eps;
          for (Index z : xi_grid.open_ball(xi, delta)) {
            const double v = fs[k](static_cast<Eigen::Index>(z));
            if (std::isinf(base) ? !(v >= floor) : !(v > floor)) {
              ok = false;
              break;
            }
          }
        }
        if (ok) {
          found = true;
          break;
        }
      }
      if (!found) {
        s.passed = false;
        s.witnesses.push_back(point_label("xi", xi) + " eps=" + to_string(ExtReal(eps)));
      }
    }
  }
  s.margin = s.passed ? ExtReal(0.0) : ExtReal(-1.0);
  r.add(std::move(s));
  r.finalize();
  return r;
}

std::vector<double> semiconvergence_in_probability(const IntegrandSequence& fs, const DiscreteMeasure& p, Index x,
                                                   double eps, Direction direction,
                                                   const std::vector<Index>& x_seq) {
  if (!x_seq.empty() && x_seq.size() != fs.items.size())
    throw std::invalid_argument("semiconvergence_in_probability: x sequence length mismatch");
  std::vector<double> out(fs.items.size(), 0.0);
  const auto& sup = p.support();
  const auto& w = p.weights();
  for (std::size_t k = 0; k < fs.items.size(); ++k) {
    const Index xk = x_seq.empty() ? x : x_seq[k];
    double mass = 0.0;
    for (std::size_t a = 0; a < sup.size(); ++a) {
      const ExtReal fn = fs.items[k](sup[a], xk);
      const ExtReal f = fs.limit(sup[a], x);
      bool hit = false;
      if (direction == Direction::below) {
        // f^nu <= f - eps; an infinite f is only beaten by a strictly smaller category.
        hit = f.is_finite() ? fn <= ExtReal(f.value() - eps) : (f.is_plus_inf() && !fn.is_plus_inf());
      } else {
        hit = f.is_finite() ? fn >= ExtReal(f.value() + eps) : (f.is_minus_inf() && !fn.is_minus_inf());
      }
      if (hit) mass += w[a];
    }
    out[k] = mass;
  }
  return out;
}

DiagnosticReport check_minorant_condition(const MinorantInputs& in) {
  if (in.fs == nullptr || in.gs == nullptr || in.ps == nullptr || in.p == nullptr || in.x_grid == nullptr)
    throw std::invalid_argument("check_minorant_condition: missing input");
  const auto& fs = *in.fs;
  const auto& gs = *in.gs;
  const auto& ps = *in.ps;
  const auto& p = *in.p;
  const Index n = fs.items.size();
  if (gs.size() != n || ps.size() != n) throw std::invalid_argument("check_minorant_condition: length mismatch");
  const Index ts = in.limits.tail_start;
  if (ts >= n) throw std::invalid_argument("check_minorant_condition: tail start past the end");

  DiagnosticReport r;
  r.check = "minorant_condition";
  r.prefix_length = n;
  r.schedules_used = {{"tail_start", ts}, {"xi_radii", in.limits.xi_radii}, {"rho", in.rho}, {"tol", in.tol}};

  const auto ball = in.x_grid->ball(in.x_bar, in.rho);
  Stage a{.name = "pointwise_minorant", .kind = StageKind::conclusion};
  ExtReal worst = ExtReal::plus_inf();
  for (Index k = ts; k < n; ++k) {
    std::vector<Index> atoms = ps[k].support();
    atoms.insert(atoms.end(), p.support().begin(), p.support().end());
    std::sort(atoms.begin(), atoms.end());
    atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
    for (Index xi : atoms) {
      ExtReal m(0.0);
      for (Index y : ball) m = min(m, fs.items[k](xi, y));
      const ExtReal g(gs[k](static_cast<Eigen::Index>(xi)));
      const ExtReal margin = (m == g) ? ExtReal(0.0) : sub_conv(m, g);
      if (margin < worst) {
        worst = margin;
        a.lhs = m;
        a.rhs = g;
      }
      if (margin < ExtReal(-in.tol)) {
        a.passed = false;
        a.witnesses.push_back("nu=" + std::to_string(k + 1) + " " + point_label("xi", xi));
      }
    }
  }
  a.margin = worst.is_plus_inf() ? ExtReal(0.0) : worst;
  r.add(std::move(a));

  // Joint upper limit of g^nu at each point, then its P-expectation.
  const MetricGrid& xi_grid = p.grid();
  std::vector<double> radii = in.limits.xi_radii;
  if (radii.size() < n) radii = shrinking_radii(n, xi_grid);
  GridFunction gup = GridFunction::Constant(static_cast<Eigen::Index>(xi_grid.size()), 0.0);
  for (Index xi : p.support()) gup(static_cast<Eigen::Index>(xi)) = joint_limsup(gs, xi_grid, xi, radii, ts).value();
  const ExtReal lhs = expect(p, gup);
  std::vector<ExtReal> eg(n);
  for (Index k = 0; k < n; ++k) eg[k] = expect(ps[k], gs[k]);
  const ExtReal rhs = liminf_seq(eg, ts);
  Stage b{.name = "integrated_minorant", .kind = StageKind::conclusion};
  b.lhs = rhs;
  b.rhs = lhs;
  b.margin = (lhs == rhs) ? ExtReal(0.0) : sub_conv(rhs, lhs);
  b.passed = !lhs.is_minus_inf() && (lhs <= rhs || b.margin >= ExtReal(-in.tol));
  if (lhs.is_minus_inf()) b.witnesses.push_back("upper limit of the minorant integrates to -inf");
  b.detail = {{"expectation_of_upper_limit", to_json(lhs)}, {"liminf_of_expectations", to_json(rhs)}};
  r.add(std::move(b));
  r.finalize();
  return r;
}

double lipschitz_estimate(const GridFunction& h, const MetricGrid& grid) {
  double L = 0.0;
  const double hsp = grid.spacing();
  for (Index i = 0; i < grid.size(); ++i) {
    const double hi = h(static_cast<Eigen::Index>(i));
    if (!std::isfinite(hi)) continue;
    for (Index j : grid.ball(i, hsp)) {
      if (j == i) continue;
      const double hj = h(static_cast<Eigen::Index>(j));
      if (!std::isfinite(hj)) continue;
      L = std::max(L, std::abs(hi - hj) / grid.distance(i, j));
    }
  }
  return L;
}

double default_tolerance(const GridFunction& h, const MetricGrid& grid) {
  return 1e-6 + grid.spacing() * lipschitz_estimate(h, grid);
}

nlohmann::json grid_function_to_json(const GridFunction& h) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < h.size(); ++i) out.push_back(to_json(ExtReal(h(i))));
  return out;
}

GridFunction grid_function_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of values");
  GridFunction h(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) h(static_cast<Eigen::Index>(i)) = extreal_from_json(j[i]).value();
  return h;
}

nlohmann::json to_json(const Integrand& f) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index xi = 0; xi < f.xi_size(); ++xi) rows.push_back(grid_function_to_json(f.slice(xi)));
  return rows;
}

Integrand integrand_from_json(const nlohmann::json& values) {
  if (!values.is_array() || values.empty()) throw std::invalid_argument("expected a nonempty array of rows");
  const std::size_t cols = values[0].is_array() ? values[0].size() : 0;
  Eigen::ArrayXXd t(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].is_array() || values[i].size() != cols)
      throw std::invalid_argument("row " + std::to_string(i) + " has the wrong length");
    for (std::size_t j = 0; j < cols; ++j)
      t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = extreal_from_json(values[i][j]).value();
  }
  return Integrand(std::move(t));
}

}  // namespace epikit
