// Finite metric grids, discrete probability measures on them, the
// bounded-Lipschitz distance between measures, and set limits of sequences of
// grid subsets.
#ifndef EPIKIT_SPACE_HPP
#define EPIKIT_SPACE_HPP

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "epikit/report.hpp"

namespace epikit {

using Index = std::size_t;

/// Finite point set with either Euclidean coordinates or an explicit
/// symmetric distance matrix. Copies share the underlying storage.
class MetricGrid {
 public:
  MetricGrid();

  /// Rows of `coords` are points.
  static MetricGrid euclidean(Eigen::MatrixXd coords);
  /// n equally spaced points on [a, b].
  static MetricGrid uniform_1d(double a, double b, Index n);
  /// Validates zero diagonal, symmetry, nonnegativity and the triangle
  /// inequality (relative slack 1e-12). Throws std::invalid_argument.
  static MetricGrid from_matrix(Eigen::MatrixXd distances);

  Index size() const;
  Index dim() const;
  bool has_coords() const;
  const Eigen::MatrixXd& coords() const;
  double coord(Index i, Index axis = 0) const;
  double distance(Index i, Index j) const;

  /// Ascending 1-D Euclidean grid (enables O(n) scans and binary searches).
  bool is_sorted_1d() const;
  /// Smallest distance between two distinct points (0 for a single point).
  double min_separation() const;
  /// Largest nearest-neighbour distance: the resolution of the grid.
  double spacing() const;

  /// Closed ball {j : d(i, j) <= r (1 + 1e-9)}, ascending. The relative slack
  /// absorbs rounding in computed grid coordinates.
  std::vector<Index> ball(Index i, double r) const;
  /// Open ball {j : d(i, j) < r}, ascending.
  std::vector<Index> open_ball(Index i, double r) const;
  /// Nearest grid point to a coordinate vector (ties: smallest index).
  Index nearest(const Eigen::VectorXd& x) const;
  /// Distance to the origin: coordinate norm, or distance to point 0 for
  /// matrix grids.
  double distance_to_origin(Index i) const;

  bool same_as(const MetricGrid& other) const;

 private:
  struct Data;
  std::shared_ptr<const Data> d_;
  explicit MetricGrid(std::shared_ptr<const Data> d);
};

/// Atoms-with-weights probability measure on a MetricGrid.
class DiscreteMeasure {
 public:
  /// Empty placeholder on an empty grid; assign before use.
  DiscreteMeasure() = default;
  /// Throws std::invalid_argument unless support points are distinct grid
  /// points, weights are nonnegative, and they sum to 1 within 1e-12.
  DiscreteMeasure(MetricGrid grid, std::vector<Index> support, std::vector<double> weights);

  static DiscreteMeasure dirac(MetricGrid grid, Index i);
  static DiscreteMeasure uniform(MetricGrid grid, std::vector<Index> points);
  /// Support = indices with positive weight.
  static DiscreteMeasure from_dense(MetricGrid grid, const Eigen::ArrayXd& weights);
  /// Empirical measure of a sample of grid indices.
  static DiscreteMeasure empirical(MetricGrid grid, const std::vector<Index>& sample);
  /// Empirical measure from per-point counts.
  static DiscreteMeasure from_counts(MetricGrid grid, const std::vector<std::size_t>& counts);
  /// (1 - t) p + t q.
  static DiscreteMeasure mixture(const DiscreteMeasure& p, const DiscreteMeasure& q, double t);

  const MetricGrid& grid() const { return grid_; }
  const std::vector<Index>& support() const { return support_; }
  const std::vector<double>& weights() const { return weights_; }
  Eigen::ArrayXd dense() const;
  double mass_at(Index i) const;

 private:
  MetricGrid grid_;
  std::vector<Index> support_;
  std::vector<double> weights_;
};

struct BoundedLipschitzResult {
  double value = 0.0;
  // Optimal test function on every grid point: |h| <= 1, Lipschitz modulus
  // <= 1, and sum_i h_i (p_i - q_i) = value.
  Eigen::ArrayXd witness;
};

/// sup { |int h dp - int h dq| : ||h||_inf <= 1, Lip(h) <= 1 }, solved
/// exactly as the equivalent transport problem with cost min(d, 2).
/// Throws std::invalid_argument on mismatched grids.
BoundedLipschitzResult bounded_lipschitz(const DiscreteMeasure& p, const DiscreteMeasure& q);
double bounded_lipschitz_distance(const DiscreteMeasure& p, const DiscreteMeasure& q);

/// Exact Wasserstein-1 on a sorted 1-D grid via cumulative distributions.
double wasserstein1_1d(const DiscreteMeasure& p, const DiscreteMeasure& q);

/// Uniform measures on the closed balls B(center, r) for each radius.
/// Radii must be positive and nonincreasing.
std::vector<DiscreteMeasure> mollifier_family(const MetricGrid& grid, Index center,
                                              const std::vector<double>& radii);

struct PointSetSequence {
  MetricGrid grid;
  std::vector<std::vector<Index>> sets;  // indexed by nu - 1
};

/// Finite stand-in for "every neighbourhood" and "infinitely many / all
/// sufficiently large nu".
struct SetLimitSchedule {
  std::vector<double> eps;          // tolerance radii
  std::vector<Index> tail_starts;   // 0-based indices into the sequence
};

/// eps = {0.5, 0.25, 0.1, 0.05} x spacing, tail starts = {N/2, 3N/4}.
SetLimitSchedule default_set_limit_schedule(const PointSetSequence& s);

std::vector<Index> outer_limit(const PointSetSequence& s, const SetLimitSchedule& sched);
std::vector<Index> inner_limit(const PointSetSequence& s, const SetLimitSchedule& sched);
DiagnosticReport set_converges(const PointSetSequence& s, const std::vector<Index>& target,
                               const SetLimitSchedule& sched);

nlohmann::json to_json(const MetricGrid& g);
MetricGrid grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscreteMeasure& m);
DiscreteMeasure measure_from_json(const nlohmann::json& j, const MetricGrid& grid);

}  // namespace epikit

#endif  // EPIKIT_SPACE_HPP
