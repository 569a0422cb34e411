// Pasch-Hausdorff envelopes h_k(x) = min_{x'} h(x') + k d(x, x') on finite
// grids and the diagnostics built on them.
#ifndef EPIKIT_ENVELOPE_HPP
#define EPIKIT_ENVELOPE_HPP

#include <optional>
#include <vector>

#include "epikit/integrand.hpp"

namespace epikit {

struct EnvelopeResult {
  double kappa = 0.0;
  GridFunction values;
  std::vector<Index> attained_at;  // smallest minimizing index per point
  bool all_infinite = false;       // input identically +inf
  bool has_minus_inf = false;      // input hits -inf, so the envelope is -inf everywhere
};

/// O(n) two-pass scan on sorted 1-D grids, O(n^2) otherwise.
EnvelopeResult pasch_hausdorff(const GridFunction& h, const MetricGrid& grid, double kappa);
/// Reference O(n^2) evaluation on any metric.
EnvelopeResult pasch_hausdorff_brute(const GridFunction& h, const MetricGrid& grid, double kappa);
/// Two-pass scan; requires grid.is_sorted_1d().
EnvelopeResult pasch_hausdorff_scan(const GridFunction& h, const MetricGrid& grid, double kappa);

/// Envelope in x of every Xi-slice.
Integrand envelope_of_integrand(const Integrand& f, const MetricGrid& x_grid, double kappa);

/// {1, 2, 4, ..., 1024} x scale.
std::vector<double> default_kappa_schedule(double scale = 1.0);
/// Geometric schedule whose top value makes every finite upward step of h
/// over the grid's minimum separation affordable, so the envelope recovers h.
std::vector<double> kappa_schedule_for(const GridFunction& h, const MetricGrid& grid);

struct MinorantAnchor {
  Index center = 0;
  double slope = 0.0;   // alpha
  double offset = 0.0;  // beta
};

/// First (slope, center) from the schedule with h + slope d(., center) + offset >= 0
/// for a finite offset. None exists when h hits -inf.
std::optional<MinorantAnchor> find_linear_minorant(const GridFunction& h, const MetricGrid& grid,
                                                   const std::vector<double>& slopes);

/// Monotone convergence h_k up to the lower regularization as k grows:
/// hypothesis "linear_minorant" (anchor search), conclusions
/// "monotone_in_kappa" (exact) and "gap_at_kappa_max" (finite regularized
/// values within tol; infinite ones still strictly rising at the top of the
/// schedule).
DiagnosticReport check_envelope_convergence(const GridFunction& h, const MetricGrid& grid,
                                            const std::vector<double>& kappas, const std::vector<double>& radii,
                                            double tol);

/// Compares the joint lower limit of h^nu at x with the supremum over kappa of
/// the tail infimum of h^nu_kappa(x). Hypothesis "envelope_bounded_below":
/// some scheduled kappa and grid point keep a tail of envelope values away
/// from -inf. Conclusion "identity": gap <= bound.
DiagnosticReport envelope_liminf_identity(const std::vector<GridFunction>& hs, const MetricGrid& grid, Index x,
                                          const std::vector<double>& kappas, const std::vector<double>& radii,
                                          Index tail_start, double bound = 1e-9);

/// E^p[f_kappa](x) <= (E^p[f])_kappa(x) at every x, violation <= 1e-9.
DiagnosticReport interchange_inequality(const Integrand& f, const DiscreteMeasure& p, const MetricGrid& x_grid,
                                        double kappa);

nlohmann::json to_json(const EnvelopeResult& r);

}  // namespace epikit

#endif  // EPIKIT_ENVELOPE_HPP
