// Four desk-scale reference problems. Each run produces a diagnostic report,
// a per-nu trace and the approximation scheme it was built from, so the epi
// checkers can be rerun on exactly the same data.
#ifndef EPIKIT_APPS_HPP
#define EPIKIT_APPS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "epikit/epi.hpp"

namespace epikit {

/// One row of the trace CSV. Column meanings are per app; see README.
struct TraceRow {
  double nu = 0.0;
  double estimate = 0.0;
  double value = 0.0;
  double violation = 0.0;
  double epi_distance = 0.0;
  double d_p = 0.0;
};

struct AppRun {
  std::string app;
  DiagnosticReport report;
  std::vector<TraceRow> trace;
  ApproximationScheme scheme;
  nlohmann::json config;  // fully resolved
};

/// Header "nu,estimate,value,violation,epi_distance,d_P", LF endings,
/// "+inf"/"-inf" for infinities, shortest round-trip decimal otherwise.
std::string trace_csv(const std::vector<TraceRow>& rows);
/// Shortest decimal that reads back to the same double; "+inf"/"-inf".
std::string format_number(double v);
nlohmann::json to_json(const TraceRow& r);
/// Report, trace and resolved config; the scheme itself is not serialized.
nlohmann::json to_json(const AppRun& run);

/// Multinomial counts of n draws from `weights`, via sequential binomials.
std::vector<std::size_t> sample_counts(const std::vector<double>& weights, std::uint64_t n, std::uint64_t seed,
                                       std::uint64_t stream);

// ---------------------------------------------------------------------------

struct SieveProblem {
  std::string density = "ramp";  // "ramp" (2 xi) or "uniform"
  std::size_t grid_points = 16;   // cells of [0, 1]
  std::vector<std::size_t> sample_sizes = {64, 128, 256, 512, 1024, 2048, 4096};
  std::vector<std::size_t> bins;       // empty: ceil(nu^(1/3))
  std::vector<double> theta;           // empty: nu^(1/4)
  std::vector<double> mixing_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t family_points = 41;      // slopes of the linear density family
  bool exact_measures = false;         // P^nu = P
  double rho = 1.0;
  std::uint64_t seed = 1;
};

/// Histogram density on `bins` equal bins of the cell grid that maximizes the
/// Q-likelihood: Q(bin) / width. Throws if the result would vanish everywhere.
Eigen::ArrayXd histogram_mle(const DiscreteMeasure& q, std::size_t bins);

AppRun run_sieve(const SieveProblem& p);

struct MollifierProblem {
  std::string g = "step";  // "step" x^2 + 1{x > 0}, "double_well", "quadratic"
  std::size_t grid_points = 513;
  double half_width = 1.0;
  double xi_half_width = 0.5;
  std::size_t terms = 12;
  std::vector<double> radii;   // empty: 2^-nu
  std::vector<double> theta;   // empty: nu
  std::vector<double> mixing_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  double bias = 0.0;           // g^nu = g + bias / nu
  double rho = 1.0;
};

AppRun run_mollifier(const MollifierProblem& p);

struct PdeProblem {
  std::vector<std::size_t> meshes = {8, 16, 32, 64};  // intervals on [0, 1]
  std::size_t reference_factor = 4;
  std::vector<double> xi_atoms = {0.5, 1.0, 1.5};
  std::vector<double> xi_weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  std::vector<std::uint64_t> samples;  // empty: 10^6 16^nu
  std::size_t x_points = 101;
  double x_max = 2.0;
  double control_weight = 0.1;
  double rho = 2.0;
  std::uint64_t seed = 1;
};

/// Second-order finite differences for -u'' = xi sin(pi t), u(0) = 0,
/// u(1) = -xi x on `intervals` equal intervals; returns nodal values.
Eigen::ArrayXd solve_two_point(double xi, double x, std::size_t intervals);
/// Max nodal error against sin(pi t) / pi^2 (xi = 1, x = 0) per mesh.
std::vector<double> analytic_errors(const std::vector<std::size_t>& meshes);
/// log(e_k / e_{k+1}) / log(n_{k+1} / n_k) for successive meshes; +inf once
/// the error is exactly zero.
std::vector<double> observed_orders(const std::vector<std::size_t>& meshes, const std::vector<double>& errors);

AppRun run_pde(const PdeProblem& p);

struct PenaltyProblem {
  double m = 1.0;
  std::size_t x_points = 401;
  double x_half_width = 2.0;
  std::vector<double> xi_offsets = {-1.0, 0.0, 1.0};  // atoms m + offset
  std::vector<double> xi_weights = {0.25, 0.5, 0.25};
  std::size_t terms = 64;
  std::uint64_t samples_per_nu = 1000;
  std::vector<double> theta;  // empty: nu
  double cq_tol = 1e-6;
  bool exact_measures = false;
  double rho = 2.0;
  std::uint64_t seed = 1;
};

/// Grid points with |E^P[f]| <= tol and no neighbour where E^P[f] < -tol.
std::vector<Index> constraint_qualification_failures(const GridFunction& constraint, const MetricGrid& grid,
                                                     double tol);

AppRun run_penalty(const PenaltyProblem& p);

nlohmann::json to_json(const SieveProblem& p);
nlohmann::json to_json(const MollifierProblem& p);
nlohmann::json to_json(const PdeProblem& p);
nlohmann::json to_json(const PenaltyProblem& p);
/// Strict readers: unknown keys and bad values throw ConfigError with the
/// JSON pointer below `ptr`. Absent keys keep their defaults.
SieveProblem sieve_from_json(const nlohmann::json& j, const std::string& ptr = "");
MollifierProblem mollifier_from_json(const nlohmann::json& j, const std::string& ptr = "");
PdeProblem pde_from_json(const nlohmann::json& j, const std::string& ptr = "");
PenaltyProblem penalty_from_json(const nlohmann::json& j, const std::string& ptr = "");

}  // namespace epikit

#endif  // EPIKIT_APPS_HPP
