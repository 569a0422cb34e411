// Integrands f(xi, x) tabulated over a Xi-grid x X-grid, expectation
// functions, tail expectations, and the grid surrogates for limits and
// semicontinuity that the diagnostics are built on.
#ifndef EPIKIT_INTEGRAND_HPP
#define EPIKIT_INTEGRAND_HPP

#include <Eigen/Dense>
#include <vector>

#include "epikit/extreal.hpp"
#include "epikit/report.hpp"
#include "epikit/space.hpp"

namespace epikit {

/// Function on a grid; entries may be +/-infinity, never NaN.
using GridFunction = Eigen::ArrayXd;

/// Tabulated integrand: rows index Xi-grid points, columns X-grid points.
class Integrand {
 public:
  Integrand() = default;
  /// Throws std::invalid_argument if any entry is NaN.
  explicit Integrand(Eigen::ArrayXXd values);

  ExtReal operator()(Index xi, Index x) const {
    return ExtReal(values_(static_cast<Eigen::Index>(xi), static_cast<Eigen::Index>(x)));
  }
  const Eigen::ArrayXXd& table() const { return values_; }
  Index xi_size() const { return static_cast<Index>(values_.rows()); }
  Index x_size() const { return static_cast<Index>(values_.cols()); }
  /// x -> f(xi, x).
  GridFunction slice(Index xi) const { return values_.row(static_cast<Eigen::Index>(xi)).transpose(); }
  /// xi -> f(xi, x).
  GridFunction column(Index x) const { return values_.col(static_cast<Eigen::Index>(x)); }

 private:
  Eigen::ArrayXXd values_;
};

struct IntegrandSequence {
  std::vector<Integrand> items;  // indexed by nu - 1
  Integrand limit;
  /// Throws unless every item has the limit's shape.
  void validate() const;
};

/// Finite-prefix stand-in for nu -> infinity and y -> x.
///
/// The sequence is considered "eventually" from `tail_start` (0-based). The
/// joint limit over (nu, y) -> (infinity, x) ranges over nu >= tail_start and
/// y in the closed ball of radius x_radii[nu] around x; likewise xi_radii for
/// zeta -> xi.
struct LimitSchedule {
  Index tail_start = 0;
  std::vector<double> x_radii;
  std::vector<double> xi_radii;
};

/// tail_start = N - max(1, N/4); radii 2 * spacing / nu on each grid.
LimitSchedule default_limit_schedule(Index n_terms, const MetricGrid& x_grid, const MetricGrid& xi_grid);
/// Radii 2 * spacing / nu for nu = 1..N.
std::vector<double> shrinking_radii(Index n_terms, const MetricGrid& grid);

/// min over nu >= tail_start, y in B(x, radii[nu]) of values[nu](y).
ExtReal joint_liminf(const std::vector<GridFunction>& values, const MetricGrid& grid, Index x,
                     const std::vector<double>& radii, Index tail_start);
ExtReal joint_limsup(const std::vector<GridFunction>& values, const MetricGrid& grid, Index x,
                     const std::vector<double>& radii, Index tail_start);

/// Tail trend test used where the limit is +infinity: every tail value is
/// +inf, or the minimum over the second half of the tail exceeds the minimum
/// over the first half. Needs at least two tail terms otherwise.
bool diverges_up(const std::vector<ExtReal>& seq, Index tail_start);
/// Evidence of divergence to -infinity: some tail value is -inf, or the tail
/// is strictly decreasing with decrements that do not shrink.
bool diverges_down(const std::vector<ExtReal>& seq, Index tail_start);

/// E^p[h] for h on p's grid: weighted plus parts minus weighted minus parts,
/// combined with sub_conv. Atoms of weight zero contribute nothing.
ExtReal expect(const DiscreteMeasure& p, const GridFunction& h);
ExtReal expectation(const Integrand& f, const DiscreteMeasure& p, Index x);
/// x -> E^p[f](x) on the whole X-grid.
GridFunction expectation_function(const Integrand& f, const DiscreteMeasure& p);

/// E^p[f(., x) 1{f(., x) <= -K}]; always <= 0.
ExtReal tail_expectation_below(const Integrand& f, const DiscreteMeasure& p, Index x, double K);
/// E^p[f(., x) 1{f(., x) >= K}]; always >= 0.
ExtReal tail_expectation_above(const Integrand& f, const DiscreteMeasure& p, Index x, double K);
ExtReal tail_expectation_below(const DiscreteMeasure& p, const GridFunction& h, double K);
ExtReal tail_expectation_above(const DiscreteMeasure& p, const GridFunction& h, double K);

/// {4, 2, 1} x spacing followed by half the minimum separation.
std::vector<double> default_regularization_radii(const MetricGrid& grid);

/// Lower regularization surrogate with closed balls including the centre:
/// result(x) = max over r in radii of min over B(x, r) of h. The result is
/// <= h; when the finest radius is below the grid's minimum separation it is
/// h itself and re-application changes nothing.
GridFunction lower_regularize(const GridFunction& h, const MetricGrid& grid, const std::vector<double>& radii);
/// Upper mirror: max over B(x, r), min over radii.
GridFunction upper_regularize(const GridFunction& h, const MetricGrid& grid, const std::vector<double>& radii);

/// h = lower_regularize(h) within tol.
DiagnosticReport check_lsc(const GridFunction& h, const MetricGrid& grid, const std::vector<double>& radii,
                           double tol = 1e-12);

/// Equi-lsc of {fs[nu](.)} on the Xi-grid at the given atoms: for every eps in
/// the list some delta in the list gives fs[nu](zeta) > fs[nu](xi) - eps for
/// all zeta in the open delta-ball and all nu >= tail_start.
DiagnosticReport check_equi_lsc(const std::vector<GridFunction>& fs, const MetricGrid& xi_grid,
                                const std::vector<Index>& atoms, const std::vector<double>& eps_list,
                                const std::vector<double>& delta_list, Index tail_start);

enum class Direction { below, above };

/// nu -> P({xi : f^nu(xi, x_nu) <= f(xi, x) - eps}) (below) or
/// P({xi : f^nu(xi, x_nu) >= f(xi, x) + eps}) (above). x_nu = x unless a
/// sequence is supplied.
std::vector<double> semiconvergence_in_probability(const IntegrandSequence& fs, const DiscreteMeasure& p, Index x,
                                                   double eps, Direction direction,
                                                   const std::vector<Index>& x_seq = {});

struct MinorantInputs {
  const IntegrandSequence* fs = nullptr;
  const std::vector<GridFunction>* gs = nullptr;  // g^nu on the Xi-grid
  const std::vector<DiscreteMeasure>* ps = nullptr;
  const DiscreteMeasure* p = nullptr;
  const MetricGrid* x_grid = nullptr;
  Index x_bar = 0;
  double rho = 0.0;
  LimitSchedule limits;
  double tol = 1e-9;
};

/// (a) min{0, inf over the closed rho-ball of f^nu(xi, .)} >= g^nu(xi) for
/// nu >= tail_start at every atom of P^nu and P; (b)
/// -inf < E^P[limsup g^nu(zeta)] <= liminf E^{P^nu}[g^nu].
DiagnosticReport check_minorant_condition(const MinorantInputs& in);

/// Largest slope |h(x) - h(y)| / d(x, y) between nearest neighbours where both
/// values are finite.
double lipschitz_estimate(const GridFunction& h, const MetricGrid& grid);
/// 1e-6 + spacing x lipschitz_estimate(h).
double default_tolerance(const GridFunction& h, const MetricGrid& grid);

nlohmann::json to_json(const Integrand& f);
Integrand integrand_from_json(const nlohmann::json& values);
nlohmann::json grid_function_to_json(const GridFunction& h);
GridFunction grid_function_from_json(const nlohmann::json& j);

}  // namespace epikit

#endif  // EPIKIT_INTEGRAND_HPP
