#include "epikit/space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace epikit {

struct MetricGrid::Data {
  Eigen::MatrixXd coords;     // n x dim, empty for matrix grids
  Eigen::MatrixXd distances;  // n x n, empty for coordinate grids
  Index n = 0;
  bool sorted_1d = false;
  double min_sep = 0.0;
  double spacing = 0.0;

  double dist(Index i, Index j) const {
    if (distances.size() > 0) return distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (coords.cols() == 1) return std::abs(coords(static_cast<Eigen::Index>(i), 0) - coords(static_cast<Eigen::Index>(j), 0));
    return (coords.row(static_cast<Eigen::Index>(i)) - coords.row(static_cast<Eigen::Index>(j))).norm();
  }

  void compute_resolution() {
    if (n < 2) return;
    if (sorted_1d) {
      double mn = std::numeric_limits<double>::infinity();
      double sp = 0.0;
      for (Index i = 0; i < n; ++i) {
        double nn = std::numeric_limits<double>::infinity();
        if (i > 0) nn = std::min(nn, dist(i, i - 1));
        if (i + 1 < n) nn = std::min(nn, dist(i, i + 1));
        mn = std::min(mn, nn);
        sp = std::max(sp, nn);
      }
      min_sep = mn;
      spacing = sp;
      return;
    }
    std::vector<double> nn(n, std::numeric_limits<double>::infinity());
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) {
        double d = dist(i, j);
        nn[i] = std::min(nn[i], d);
        nn[j] = std::min(nn[j], d);
      }
    min_sep = *std::min_element(nn.begin(), nn.end());
    spacing = *std::max_element(nn.begin(), nn.end());
  }
};

MetricGrid::MetricGrid() : d_(std::make_shared<Data>()) {}
MetricGrid::MetricGrid(std::shared_ptr<const Data> d) : d_(std::move(d)) {}

MetricGrid MetricGrid::euclidean(Eigen::MatrixXd coords) {
  if (coords.rows() == 0 || coords.cols() == 0) throw std::invalid_argument("MetricGrid: empty coordinates");
  if (!coords.allFinite()) throw std::invalid_argument("MetricGrid: non-finite coordinate");
  auto d = std::make_shared<Data>();
  d->n = static_cast<Index>(coords.rows());
  d->sorted_1d = coords.cols() == 1;
  for (Eigen::Index i = 1; i < coords.rows() && d->sorted_1d; ++i)
    if (!(coords(i, 0) > coords(i - 1, 0))) d->sorted_1d = false;
  d->coords = std::move(coords);
  if (!d->sorted_1d) {
    for (Index i = 0; i < d->n; ++i)
      for (Index j = i + 1; j < d->n; ++j)
        if (d->dist(i, j) == 0.0) throw std::invalid_argument("MetricGrid: duplicate point");
  }
  d->compute_resolution();
  return MetricGrid(std::move(d));
}

MetricGrid MetricGrid::uniform_1d(double a, double b, Index n) {
  if (n < 1 || !(b > a || n == 1)) throw std::invalid_argument("uniform_1d: need b > a and n >= 1");
  Eigen::MatrixXd c(static_cast<Eigen::Index>(n), 1);
  const double step = n > 1 ? (b - a) / static_cast<double>(n - 1) : 0.0;
  for (Index i = 0; i < n; ++i) c(static_cast<Eigen::Index>(i), 0) = a + step * static_cast<double>(i);
  if (n > 1) c(static_cast<Eigen::Index>(n - 1), 0) = b;
  return euclidean(std::move(c));
}

MetricGrid MetricGrid::from_matrix(Eigen::MatrixXd dm) {
  const Eigen::Index n = dm.rows();
  if (n == 0 || dm.cols() != n) throw std::invalid_argument("MetricGrid: distance matrix must be square and nonempty");
  if (!dm.allFinite()) throw std::invalid_argument("MetricGrid: non-finite distance");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dm(i, i) != 0.0) throw std::invalid_argument("MetricGrid: nonzero diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (dm(i, j) != dm(j, i)) throw std::invalid_argument("MetricGrid: asymmetric distance matrix");
      if (i != j && !(dm(i, j) > 0.0)) throw std::invalid_argument("MetricGrid: distinct points need positive distance");
    }
  }
  const double scale = dm.maxCoeff();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k)
        if (dm(i, k) > dm(i, j) + dm(j, k) + 1e-12 * scale)
          throw std::invalid_argument("MetricGrid: triangle inequality violated");
  auto d = std::make_shared<Data>();
  d->n = static_cast<Index>(n);
  d->distances = std::move(dm);
  d->compute_resolution();
  return MetricGrid(std::move(d));
}

Index MetricGrid::size() const { return d_->n; }
Index MetricGrid::dim() const { return static_cast<Index>(d_->coords.cols()); }
bool MetricGrid::has_coords() const { return d_->coords.size() > 0; }
const Eigen::MatrixXd& MetricGrid::coords() const { return d_->coords; }
double MetricGrid::coord(Index i, Index axis) const {
  return d_->coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(axis));
}
double MetricGrid::distance(Index i, Index j) const { return d_->dist(i, j); }
bool MetricGrid::is_sorted_1d() const { return d_->sorted_1d; }
double MetricGrid::min_separation() const { return d_->min_sep; }
double MetricGrid::spacing() const { return d_->spacing; }

std::vector<Index> MetricGrid::ball(Index i, double r) const {
  std::vector<Index> out;
  // Coordinates like a + i h do not reproduce h exactly; a radius of one
  // spacing must still reach the neighbours.
  r *= 1.0 + 1e-9;
  if (r < d_->min_sep) {
    out.push_back(i);
    return out;
  }
  if (d_->sorted_1d) {
    const auto& c = d_->coords;
    const double x = c(static_cast<Eigen::Index>(i), 0);
    Index lo = i;
    while (lo > 0 && x - c(static_cast<Eigen::Index>(lo - 1), 0) <= r) --lo;
    Index hi = i;
    while (hi + 1 < d_->n && c(static_cast<Eigen::Index>(hi + 1), 0) - x <= r) ++hi;
    out.resize(hi - lo + 1);
    std::iota(out.begin(), out.end(), lo);
    return out;
  }
  for (Index j = 0; j < d_->n; ++j)
    if (d_->dist(i, j) <= r) out.push_back(j);
  return out;
}

std::vector<Index> MetricGrid::open_ball(Index i, double r) const {
  std::vector<Index> out;
  for (Index j = 0; j < d_->n; ++j)
    if (d_->dist(i, j) < r) out.push_back(j);
  return out;
}

Index MetricGrid::nearest(const Eigen::VectorXd& x) const {
  if (!has_coords()) throw std::logic_error("nearest: grid has no coordinates");
  Index best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < d_->n; ++j) {
    double dj = (d_->coords.row(static_cast<Eigen::Index>(j)).transpose() - x).norm();
    if (dj < bd) {
      bd = dj;
      best = j;
    }
  }
  return best;
}

double MetricGrid::distance_to_origin(Index i) const {
  if (has_coords()) return d_->coords.row(static_cast<Eigen::Index>(i)).norm();
  return d_->dist(i, 0);
}

bool MetricGrid::same_as(const MetricGrid& other) const {
  if (d_ == other.d_) return true;
  if (d_->n != other.d_->n) return false;
  return d_->coords.rows() == other.d_->coords.rows() && d_->coords.cols() == other.d_->coords.cols() &&
         d_->coords == other.d_->coords && d_->distances.rows() == other.d_->distances.rows() &&
         d_->distances == other.d_->distances;
}

// ---------------------------------------------------------------------------

DiscreteMeasure::DiscreteMeasure(MetricGrid grid, std::vector<Index> support, std::vector<double> weights)
    : grid_(std::move(grid)), support_(std::move(support)), weights_(std::move(weights)) {
  if (support_.empty()) throw std::invalid_argument("DiscreteMeasure: empty support");
  if (support_.size() != weights_.size()) throw std::invalid_argument("DiscreteMeasure: support/weights length mismatch");
  std::vector<Index> sorted = support_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("DiscreteMeasure: repeated support point");
  if (sorted.back() >= grid_.size()) throw std::invalid_argument("DiscreteMeasure: support point outside grid");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("DiscreteMeasure: weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("DiscreteMeasure: weights must sum to 1");
}

DiscreteMeasure DiscreteMeasure::dirac(MetricGrid grid, Index i) { return DiscreteMeasure(std::move(grid), {i}, {1.0}); }

DiscreteMeasure DiscreteMeasure::uniform(MetricGrid grid, std::vector<Index> points) {
  if (points.empty()) throw std::invalid_argument("uniform: empty point set");
  std::vector<double> w(points.size(), 1.0 / static_cast<double>(points.size()));
  return DiscreteMeasure(std::move(grid), std::move(points), std::move(w));
}

DiscreteMeasure DiscreteMeasure::from_dense(MetricGrid grid, const Eigen::ArrayXd& weights) {
  if (static_cast<Index>(weights.size()) != grid.size()) throw std::invalid_argument("from_dense: size mismatch");
  std::vector<Index> s;
  std::vector<double> w;
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    if (weights(i) > 0.0) {
      s.push_back(static_cast<Index>(i));
      w.push_back(weights(i));
    }
  return DiscreteMeasure(std::move(grid), std::move(s), std::move(w));
}

DiscreteMeasure DiscreteMeasure::from_counts(MetricGrid grid, const std::vector<std::size_t>& counts) {
  if (counts.size() != grid.size()) throw std::invalid_argument("from_counts: size mismatch");
  std::size_t n = 0;
  for (auto c : counts) n += c;
  if (n == 0) throw std::invalid_argument("from_counts: empty sample");
  std::vector<Index> s;
  std::vector<double> w;
  for (Index i = 0; i < counts.size(); ++i)
    if (counts[i] > 0) {
      s.push_back(i);
      w.push_back(static_cast<double>(counts[i]) / static_cast<double>(n));
    }
  return DiscreteMeasure(std::move(grid), std::move(s), std::move(w));
}

DiscreteMeasure DiscreteMeasure::empirical(MetricGrid grid, const std::vector<Index>& sample) {
  std::vector<std::size_t> counts(grid.size(), 0);
  for (Index i : sample) {
    if (i >= grid.size()) throw std::invalid_argument("empirical: sample outside grid");
    ++counts[i];
  }
  return from_counts(std::move(grid), counts);
}

DiscreteMeasure DiscreteMeasure::mixture(const DiscreteMeasure& p, const DiscreteMeasure& q, double t) {
  if (!p.grid().same_as(q.grid())) throw std::invalid_argument("mixture: measures on different grids");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("mixture: t must lie in [0, 1]");
  Eigen::ArrayXd w = (1.0 - t) * p.dense() + t * q.dense();
  return from_dense(p.grid(), w);
}

Eigen::ArrayXd DiscreteMeasure::dense() const {
  Eigen::ArrayXd w = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(grid_.size()));
  for (Index k = 0; k < support_.size(); ++k) w(static_cast<Eigen::Index>(support_[k])) = weights_[k];
  return w;
}

double DiscreteMeasure::mass_at(Index i) const {
  for (Index k = 0; k < support_.size(); ++k)
    if (support_[k] == i) return weights_[k];
  return 0.0;
}

// ---------------------------------------------------------------------------
// Bounded-Lipschitz distance.
//
// With c = min(d, 2), the class {|h| <= 1, Lip_d(h) <= 1} coincides, up to
// additive constants that integrate to zero against p - q, with the
// 1-Lipschitz functions for c. The distance is therefore the optimal transport
// cost of moving (p - q)_+ onto (p - q)_- under c, solved here by successive
// shortest paths. Node potentials at optimality give the dual test function.

namespace {

struct TransportSolution {
  double cost = 0.0;
  std::vector<double> pot_src;
  std::vector<double> pot_dst;
};

TransportSolution solve_transport(const std::vector<double>& supply, const std::vector<double>& demand,
                                  const Eigen::MatrixXd& cost) {
  const Index ns = supply.size();
  const Index nd = demand.size();
  const Index nv = ns + nd;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> sup = supply;
  std::vector<double> dem = demand;
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(nd));
  std::vector<double> pot(nv, 0.0);
  double total = std::accumulate(sup.begin(), sup.end(), 0.0);
  const double eps = 1e-15 * std::max(1.0, total);

  std::vector<double> dist(nv);
  std::vector<std::ptrdiff_t> prev(nv);
  std::vector<char> done(nv);
  for (;;) {
    bool any_src = false;
    for (Index s = 0; s < ns; ++s) any_src = any_src || sup[s] > eps;
    bool any_dst = false;
    for (Index t = 0; t < nd; ++t) any_dst = any_dst || dem[t] > eps;
    if (!any_src || !any_dst) break;

    // Dense Dijkstra over reduced costs; sources with remaining supply start at 0.
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (Index s = 0; s < ns; ++s)
      if (sup[s] > eps) dist[s] = 0.0;
    for (;;) {
      Index u = nv;
      double best = inf;
      for (Index v = 0; v < nv; ++v)
        if (!done[v] && dist[v] < best) {
          best = dist[v];
          u = v;
        }
      if (u == nv) break;
      done[u] = 1;
      if (u < ns) {
        for (Index t = 0; t < nd; ++t) {
          const Index v = ns + t;
          if (done[v]) continue;
          double rc = cost(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(t)) + pot[u] - pot[v];
          rc = std::max(rc, 0.0);
          if (dist[u] + rc < dist[v]) {
            dist[v] = dist[u] + rc;
            prev[v] = static_cast<std::ptrdiff_t>(u);
          }
        }
      } else {
        const Index t = u - ns;
        for (Index s = 0; s < ns; ++s) {
          if (done[s] || flow(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) <= 0.0) continue;
          double rc = -cost(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) + pot[u] - pot[s];
          rc = std::max(rc, 0.0);
          if (dist[u] + rc < dist[s]) {
            dist[s] = dist[u] + rc;
            prev[s] = static_cast<std::ptrdiff_t>(u);
          }
        }
      }
    }
    Index sink = nv;
    double dsink = inf;
    for (Index t = 0; t < nd; ++t)
      if (dem[t] > eps && dist[ns + t] < dsink) {
        dsink = dist[ns + t];
        sink = ns + t;
      }
    if (sink == nv) throw std::logic_error("bounded_lipschitz: transport network disconnected");
    for (Index v = 0; v < nv; ++v) pot[v] += std::min(dist[v], dsink);

    // Bottleneck along the path.
    double amount = dem[sink - ns];
    Index v = sink;
    while (prev[v] >= 0) {
      const Index u = static_cast<Index>(prev[v]);
      if (u >= ns)  // backward arc (dst u -> src v)
        amount = std::min(amount, flow(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u - ns)));
      v = u;
    }
    amount = std::min(amount, sup[v]);
    const Index src = v;
    v = sink;
    while (prev[v] >= 0) {
      const Index u = static_cast<Index>(prev[v]);
      if (u < ns)
        flow(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v - ns)) += amount;
      else
        flow(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u - ns)) -= amount;
      v = u;
    }
    sup[src] -= amount;
    dem[sink - ns] -= amount;
  }

  TransportSolution sol;
  for (Index s = 0; s < ns; ++s)
    for (Index t = 0; t < nd; ++t) {
      const double f = flow(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
      if (f > 0.0) sol.cost += f * cost(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
    }
  sol.pot_src.assign(pot.begin(), pot.begin() + static_cast<std::ptrdiff_t>(ns));
  sol.pot_dst.assign(pot.begin() + static_cast<std::ptrdiff_t>(ns), pot.end());
  return sol;
}

}  // namespace

BoundedLipschitzResult bounded_lipschitz(const DiscreteMeasure& p, const DiscreteMeasure& q) {
  const MetricGrid& g = p.grid();
  if (!g.same_as(q.grid())) throw std::invalid_argument("bounded_lipschitz: measures on different grids");
  const Eigen::ArrayXd diff = p.dense() - q.dense();
  std::vector<Index> src, dst;
  std::vector<double> supply, demand;
  for (Eigen::Index i = 0; i < diff.size(); ++i) {
    if (diff(i) > 0.0) {
      src.push_back(static_cast<Index>(i));
      supply.push_back(diff(i));
    } else if (diff(i) < 0.0) {
      dst.push_back(static_cast<Index>(i));
      demand.push_back(-diff(i));
    }
  }
  BoundedLipschitzResult res;
  res.witness = Eigen::ArrayXd::Zero(diff.size());
  if (src.empty() || dst.empty()) return res;

  auto c = [&](Index a, Index b) { return std::min(g.distance(a, b), 2.0); };
  Eigen::MatrixXd cost(static_cast<Eigen::Index>(src.size()), static_cast<Eigen::Index>(dst.size()));
  for (Index s = 0; s < src.size(); ++s)
    for (Index t = 0; t < dst.size(); ++t) cost(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = c(src[s], dst[t]);
  const TransportSolution sol = solve_transport(supply, demand, cost);
  res.value = sol.cost;

  // Dual: F(dst) = -pot, extended to the grid by the c-transform
  // h(z) = min_t F(t) + c(z, t), then centred so that |h| <= 1.
  Eigen::ArrayXd h(diff.size());
  for (Eigen::Index z = 0; z < diff.size(); ++z) {
    double best = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < dst.size(); ++t) best = std::min(best, -sol.pot_dst[t] + c(static_cast<Index>(z), dst[t]));
    h(z) = best;
  }
  const double mid = 0.5 * (h.maxCoeff() + h.minCoeff());
  res.witness = h - mid;
  return res;
}

double bounded_lipschitz_distance(const DiscreteMeasure& p, const DiscreteMeasure& q) {
  return bounded_lipschitz(p, q).value;
}

double wasserstein1_1d(const DiscreteMeasure& p, const DiscreteMeasure& q) {
  const MetricGrid& g = p.grid();
  if (!g.same_as(q.grid())) throw std::invalid_argument("wasserstein1_1d: measures on different grids");
  if (!g.is_sorted_1d()) throw std::invalid_argument("wasserstein1_1d: needs a sorted 1-D grid");
  const Eigen::ArrayXd diff = p.dense() - q.dense();
  double cdf = 0.0;
  double total = 0.0;
  for (Index i = 0; i + 1 < g.size(); ++i) {
    cdf += diff(static_cast<Eigen::Index>(i));
    total += std::abs(cdf) * (g.coord(i + 1) - g.coord(i));
  }
  return total;
}

std::vector<DiscreteMeasure> mollifier_family(const MetricGrid& grid, Index center, const std::vector<double>& radii) {
  if (center >= grid.size()) throw std::invalid_argument("mollifier_family: center outside grid");
  std::vector<DiscreteMeasure> out;
  for (Index k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0)) throw std::invalid_argument("mollifier_family: radii must be positive");
    if (k > 0 && radii[k] > radii[k - 1]) throw std::invalid_argument("mollifier_family: radii must be nonincreasing");
    auto pts = grid.ball(center, radii[k]);
    if (pts.empty()) throw std::invalid_argument("mollifier_family: empty ball");
    out.push_back(DiscreteMeasure::uniform(grid, std::move(pts)));
  }
  return out;
}

// ---------------------------------------------------------------------------

SetLimitSchedule default_set_limit_schedule(const PointSetSequence& s) {
  SetLimitSchedule sc;
  const double h = s.grid.spacing() > 0.0 ? s.grid.spacing() : 1.0;
  sc.eps = {0.5 * h, 0.25 * h, 0.1 * h, 0.05 * h};
  const Index n = s.sets.size();
  sc.tail_starts = {n / 2, (3 * n) / 4};
  return sc;
}

namespace {

void validate(const PointSetSequence& s, const SetLimitSchedule& sched) {
  if (s.sets.empty()) throw std::invalid_argument("set limits: empty sequence");
  for (const auto& set : s.sets)
    for (Index i : set)
      if (i >= s.grid.size()) throw std::invalid_argument("set limits: point outside grid");
  for (Index t : sched.tail_starts)
    if (t >= s.sets.size()) throw std::invalid_argument("set limits: tail start past end of sequence");
  if (sched.eps.empty() || sched.tail_starts.empty()) throw std::invalid_argument("set limits: empty schedule");
}

// dist(p, sets[nu]) for every nu.
std::vector<double> distances_to_sets(const PointSetSequence& s, Index p) {
  std::vector<double> out(s.sets.size(), std::numeric_limits<double>::infinity());
  for (Index nu = 0; nu < s.sets.size(); ++nu)
    for (Index q : s.sets[nu]) out[nu] = std::min(out[nu], s.grid.distance(p, q));
  return out;
}

}  // namespace

std::vector<Index> outer_limit(const PointSetSequence& s, const SetLimitSchedule& sched) {
  validate(s, sched);
  std::vector<Index> out;
  for (Index p = 0; p < s.grid.size(); ++p) {
    const auto d = distances_to_sets(s, p);
    bool member = true;
    for (double e : sched.eps)
      for (Index n : sched.tail_starts) {
        bool hit = false;
        for (Index nu = n; nu < d.size() && !hit; ++nu) hit = d[nu] <= e;
        member = member && hit;
      }
    if (member) out.push_back(p);
  }
  return out;
}

std::vector<Index> inner_limit(const PointSetSequence& s, const SetLimitSchedule& sched) {
  validate(s, sched);
  std::vector<Index> out;
  for (Index p = 0; p < s.grid.size(); ++p) {
    const auto d = distances_to_sets(s, p);
    bool member = true;
    for (double e : sched.eps) {
      bool some_tail = false;
      for (Index n : sched.tail_starts) {
        bool all = true;
        for (Index nu = n; nu < d.size() && all; ++nu) all = d[nu] <= e;
        some_tail = some_tail || all;
      }
      member = member && some_tail;
    }
    if (member) out.push_back(p);
  }
  return out;
}

DiagnosticReport set_converges(const PointSetSequence& s, const std::vector<Index>& target,
                               const SetLimitSchedule& sched) {
  std::vector<Index> tgt = target;
  std::sort(tgt.begin(), tgt.end());
  const auto inner = inner_limit(s, sched);
  const auto outer = outer_limit(s, sched);
  DiagnosticReport r;
  r.check = "set_converges";
  r.prefix_length = s.sets.size();
  r.schedules_used = {{"eps", sched.eps}, {"tail_starts", sched.tail_starts}};

  auto compare = [&](const std::string& name, const std::vector<Index>& got) {
    Stage st;
    st.name = name;
    st.kind = StageKind::conclusion;
    std::vector<Index> missing, extra;
    std::set_difference(tgt.begin(), tgt.end(), got.begin(), got.end(), std::back_inserter(missing));
    std::set_difference(got.begin(), got.end(), tgt.begin(), tgt.end(), std::back_inserter(extra));
    for (Index i : missing) st.witnesses.push_back("point " + std::to_string(i) + " in target but not in limit");
    for (Index i : extra) st.witnesses.push_back("point " + std::to_string(i) + " in limit but not in target");
    st.passed = missing.empty() && extra.empty();
    st.margin = ExtReal(-static_cast<double>(missing.size() + extra.size()));
    st.detail = {{"limit", got}};
    r.add(std::move(st));
  };
  compare("inner_limit_equals_target", inner);
  compare("outer_limit_equals_target", outer);
  r.finalize();
  return r;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const MetricGrid& g) {
  nlohmann::json j;
  if (g.has_coords()) {
    nlohmann::json pts = nlohmann::json::array();
    for (Index i = 0; i < g.size(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Index a = 0; a < g.dim(); ++a) row.push_back(g.coord(i, a));
      pts.push_back(row);
    }
    j["points"] = pts;
    j["metric"] = "euclidean";
  } else {
    nlohmann::json m = nlohmann::json::array();
    for (Index i = 0; i < g.size(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Index k = 0; k < g.size(); ++k) row.push_back(g.distance(i, k));
      m.push_back(row);
    }
    nlohmann::json pts = nlohmann::json::array();
    for (Index i = 0; i < g.size(); ++i) pts.push_back(nlohmann::json::array({static_cast<double>(i)}));
    j["points"] = pts;
    j["metric"] = {{"matrix", m}};
  }
  return j;
}

MetricGrid grid_from_json(const nlohmann::json& j) {
  const auto& pts = j.at("points");
  const auto n = static_cast<Eigen::Index>(pts.size());
  if (n == 0) throw std::invalid_argument("grid: empty points");
  const nlohmann::json metric = j.contains("metric") ? j.at("metric") : nlohmann::json("euclidean");
  if (metric.is_object()) {
    const auto& m = metric.at("matrix");
    Eigen::MatrixXd dm(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m.size()));
    for (Eigen::Index i = 0; i < dm.rows(); ++i) {
      if (m[static_cast<std::size_t>(i)].size() != m.size()) throw std::invalid_argument("grid: matrix must be square");
      for (Eigen::Index k = 0; k < dm.cols(); ++k) dm(i, k) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
    if (dm.rows() != n) throw std::invalid_argument("grid: matrix size differs from point count");
    return MetricGrid::from_matrix(std::move(dm));
  }
  if (metric != "euclidean") throw std::invalid_argument("grid: metric must be \"euclidean\" or {\"matrix\": ...}");
  const auto dim = static_cast<Eigen::Index>(pts[0].size());
  Eigen::MatrixXd c(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = pts[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(row.size()) != dim) throw std::invalid_argument("grid: ragged point coordinates");
    for (Eigen::Index a = 0; a < dim; ++a) c(i, a) = row[static_cast<std::size_t>(a)].get<double>();
  }
  return MetricGrid::euclidean(std::move(c));
}

nlohmann::json to_json(const DiscreteMeasure& m) { return {{"support", m.support()}, {"weights", m.weights()}}; }

DiscreteMeasure measure_from_json(const nlohmann::json& j, const MetricGrid& grid) {
  return DiscreteMeasure(grid, j.at("support").get<std::vector<Index>>(), j.at("weights").get<std::vector<double>>());
}

}  // namespace epikit
