// Epi-convergence diagnostics on finite grids: the two-leg definition,
// Fatou-type lower bounds for expectation functions (through envelopes and
// through weak convergence), extended Fatou inequalities for sequences on Xi,
// and the Attouch-Wets epi-distance.
//
// Every checker separates hypothesis stages from conclusion stages and never
// assumes a hypothesis it could not verify on the finite prefix.
#ifndef EPIKIT_EPI_HPP
#define EPIKIT_EPI_HPP

#include <optional>
#include <vector>

#include "epikit/envelope.hpp"
#include "epikit/integrand.hpp"

namespace epikit {

struct SchemeSchedules {
  std::vector<double> kappas;        // envelope moduli, ascending
  std::vector<double> ks;            // truncation levels K, ascending
  LimitSchedule limits;              // tail start and shrinking balls
  double recovery_radius = 0.0;      // ball searched for recovery points
  std::vector<double> lsc_radii;     // lower regularization schedule on X
  double tol = 0.0;
  double weak_tol = 0.1;             // bound on BL(P^nu, P) over the tail
  std::vector<Index> dense_subset;   // empty means the whole X-grid
};

/// f, f^nu on Xi x X together with P, P^nu on Xi and the schedules.
struct ApproximationScheme {
  MetricGrid x_grid;
  MetricGrid xi_grid;
  IntegrandSequence integrands;
  DiscreteMeasure p;
  std::vector<DiscreteMeasure> ps;  // indexed by nu - 1
  SchemeSchedules schedules;

  Index size() const { return ps.size(); }
  /// Throws std::invalid_argument on shape, grid or schedule mismatches.
  void validate() const;
  /// Fills every empty or zero schedule entry with its default.
  void complete_schedules();
};

/// K-schedule {1, 2, 4, ...} up to twice the largest finite |value| + 1.
std::vector<double> default_truncation_schedule(const Eigen::ArrayXXd& limit_values);

/// nu -> E^{P^nu}[f^nu] on the X-grid.
std::vector<GridFunction> expectation_trace(const ApproximationScheme& s);

struct EpiOptions {
  Index tail_start = 0;
  std::vector<double> radii;      // per-nu radius for y -> x
  double recovery_radius = 0.0;
  double tol = 1e-6;
};

/// Defaults from the grid: tail N - max(1, N/4), radii 2 spacing / nu,
/// recovery radius one spacing, tol 1e-6 + spacing x Lipschitz estimate of h.
EpiOptions default_epi_options(Index n_terms, const MetricGrid& grid, const GridFunction& h);

/// Stages "liminf_leg" and "recovery_leg". Where h = +inf the lower leg asks
/// for a rising tail instead of a bound.
DiagnosticReport check_epi_convergence(const std::vector<GridFunction>& hs, const GridFunction& h,
                                       const MetricGrid& grid, const EpiOptions& opt);

/// Lower bound through envelopes: hypotheses "envelope_tail_bound" and
/// "lsc_in_x", conclusion "lower_bound" (and "lower_bound_finite" when some
/// point has a finite joint lower limit).
DiagnosticReport parametric_fatou_envelope_route(const ApproximationScheme& s);

/// The envelope route plus hypothesis "limsup_on_subset", then the two legs of
/// epi-convergence of the expectation functions.
DiagnosticReport epi_convergence_expectations(const ApproximationScheme& s);

/// Lower bound under weak convergence at the given points (all when empty):
/// hypotheses "weak_convergence", "uniform_integrability_below",
/// "joint_lower_limit"; conclusion "lower_bound".
DiagnosticReport fatou_weak(const ApproximationScheme& s, const std::vector<Index>& points = {});

struct SequenceOnXi {
  std::vector<GridFunction> hs;  // h^nu on the Xi-grid
  std::vector<DiscreteMeasure> ps;
  DiscreteMeasure p;
  LimitSchedule limits;          // only tail_start and xi_radii are used
  std::vector<double> ks;
  double tol = 1e-6;
};

/// Hypothesis "uniform_integrability_below"; conclusions "fatou_inequality"
/// and "finite_or_integrable_positive_part".
DiagnosticReport fatou_extended(const SequenceOnXi& in);
/// Mirror with upper tails and upper limits: hypothesis
/// "uniform_integrability_above", conclusion "reverse_fatou_inequality".
DiagnosticReport fatou_upper(const SequenceOnXi& in);

/// recovery[x][nu]; empty means search (x^nu = x first, then the
/// minimizer of E^{P^nu}[f^nu] over the recovery ball).
using RecoverySequences = std::vector<std::vector<Index>>;

/// fatou_weak at every point, hypotheses "upper_integrability" and
/// "recovery_upper_limit" for the recovery sequences, then the two legs of
/// epi-convergence of the expectation functions.
DiagnosticReport epi_convergence_weak(const ApproximationScheme& s, const RecoverySequences& recovery = {});

/// sup over grid points within rho of the origin and alpha in [-rho, rho] of
/// |dist((x, alpha), epi h1) - dist((x, alpha), epi h2)|. The alpha step is
/// the finite value range / 200, capped at rho, unless given.
double attouch_wets_distance(const GridFunction& h1, const GridFunction& h2, const MetricGrid& grid, double rho,
                             double alpha_step = 0.0);

/// Conclusions "min_value" (|min h^N - min h| <= tol) and "argmin_cluster"
/// (tail argmins within one spacing of {h <= min h + 2 tol}).
DiagnosticReport check_minimizer_transfer(const std::vector<GridFunction>& hs, const GridFunction& h,
                                          const MetricGrid& grid, Index tail_start, double tol);

nlohmann::json to_json(const ApproximationScheme& s);
/// Strict reader; errors carry the JSON pointer of the offending value.
ApproximationScheme scheme_from_json(const nlohmann::json& j);

}  // namespace epikit

#endif  // EPIKIT_EPI_HPP
