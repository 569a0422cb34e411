#include <charconv>
#include <cmath>
#include <random>
#include <stdexcept>

#include "epikit/apps.hpp"
#include "epikit/config.hpp"

namespace epikit {

std::string format_number(double v) {
  if (std::isnan(v)) throw std::invalid_argument("format_number: NaN");
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::string out = "nu,estimate,value,violation,epi_distance,d_P\n";
  for (const auto& r : rows) {
    out += format_number(r.nu) + ',' + format_number(r.estimate) + ',' + format_number(r.value) + ',' +
           format_number(r.violation) + ',' + format_number(r.epi_distance) + ',' + format_number(r.d_p) + '\n';
  }
  return out;
}

nlohmann::json to_json(const TraceRow& r) {
  return {{"nu", to_json(ExtReal(r.nu))},
          {"estimate", to_json(ExtReal(r.estimate))},
          {"value", to_json(ExtReal(r.value))},
          {"violation", to_json(ExtReal(r.violation))},
          {"epi_distance", to_json(ExtReal(r.epi_distance))},
          {"d_P", to_json(ExtReal(r.d_p))}};
}

nlohmann::json to_json(const AppRun& run) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& r : run.trace) trace.push_back(to_json(r));
  return {{"app", run.app}, {"config", run.config}, {"report", to_json(run.report)}, {"trace", trace}};
}

std::vector<std::size_t> sample_counts(const std::vector<double>& weights, std::uint64_t n, std::uint64_t seed,
                                       std::uint64_t stream) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || std::isinf(w)) throw std::invalid_argument("sample_counts: weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_counts: weights sum to zero");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> counts(weights.size(), 0);
  std::uint64_t left = n;
  double mass = total;
  for (std::size_t i = 0; i < weights.size() && left > 0; ++i) {
    if (i + 1 == weights.size()) {
      counts[i] = left;
      left = 0;
      break;
    }
    const double q = std::clamp(weights[i] / mass, 0.0, 1.0);
    std::binomial_distribution<std::uint64_t> draw(left, q);
    const std::uint64_t c = draw(rng);
    counts[i] = c;
    left -= c;
    mass -= weights[i];
  }
  return counts;
}

// --- problem configs -------------------------------------------------------

namespace {

std::vector<std::uint64_t> read_u64s(const nlohmann::json& j, const std::string& ptr) {
  const auto v = read_indices(j, ptr);
  return {v.begin(), v.end()};
}

std::uint64_t read_u64(const nlohmann::json& j, const std::string& ptr) { return read_index(j, ptr); }

}  // namespace

nlohmann::json to_json(const SieveProblem& p) {
  return {{"density", p.density},         {"grid_points", p.grid_points},     {"sample_sizes", p.sample_sizes},
          {"bins", p.bins},               {"theta", p.theta},                 {"mixing_grid", p.mixing_grid},
          {"family_points", p.family_points}, {"exact_measures", p.exact_measures}, {"rho", p.rho},
          {"seed", p.seed}};
}

nlohmann::json to_json(const MollifierProblem& p) {
  return {{"g", p.g},
          {"grid_points", p.grid_points},
          {"half_width", p.half_width},
          {"xi_half_width", p.xi_half_width},
          {"terms", p.terms},
          {"radii", p.radii},
          {"theta", p.theta},
          {"mixing_grid", p.mixing_grid},
          {"bias", p.bias},
          {"rho", p.rho}};
}

nlohmann::json to_json(const PdeProblem& p) {
  return {{"meshes", p.meshes},   {"reference_factor", p.reference_factor}, {"xi_atoms", p.xi_atoms},
          {"xi_weights", p.xi_weights}, {"samples", p.samples},          {"x_points", p.x_points},
          {"x_max", p.x_max},     {"control_weight", p.control_weight},     {"rho", p.rho},
          {"seed", p.seed}};
}

nlohmann::json to_json(const PenaltyProblem& p) {
  return {{"m", p.m},
          {"x_points", p.x_points},
          {"x_half_width", p.x_half_width},
          {"xi_offsets", p.xi_offsets},
          {"xi_weights", p.xi_weights},
          {"terms", p.terms},
          {"samples_per_nu", p.samples_per_nu},
          {"theta", p.theta},
          {"cq_tol", p.cq_tol},
          {"exact_measures", p.exact_measures},
          {"rho", p.rho},
          {"seed", p.seed}};
}

SieveProblem sieve_from_json(const nlohmann::json& j, const std::string& ptr) {
  require_object(j, ptr,
                 {"density", "grid_points", "sample_sizes", "bins", "theta", "mixing_grid", "family_points",
                  "exact_measures", "rho", "seed"});
  SieveProblem p;
  read_optional(j, ptr, "density", p.density, read_string);
  if (p.density != "ramp" && p.density != "uniform")
    throw ConfigError(child_pointer(ptr, "density"), "expected \"ramp\" or \"uniform\"");
  read_optional(j, ptr, "grid_points", p.grid_points, read_index);
  read_optional(j, ptr, "sample_sizes", p.sample_sizes, read_indices);
  read_optional(j, ptr, "bins", p.bins, read_indices);
  read_optional(j, ptr, "theta", p.theta, read_numbers);
  read_optional(j, ptr, "mixing_grid", p.mixing_grid, read_numbers);
  read_optional(j, ptr, "family_points", p.family_points, read_index);
  read_optional(j, ptr, "exact_measures", p.exact_measures, read_bool);
  read_optional(j, ptr, "rho", p.rho, read_positive);
  read_optional(j, ptr, "seed", p.seed, read_u64);
  return p;
}

MollifierProblem mollifier_from_json(const nlohmann::json& j, const std::string& ptr) {
  require_object(j, ptr,
                 {"g", "grid_points", "half_width", "xi_half_width", "terms", "radii", "theta", "mixing_grid", "bias",
                  "rho"});
  MollifierProblem p;
  read_optional(j, ptr, "g", p.g, read_string);
  if (p.g != "step" && p.g != "double_well" && p.g != "quadratic")
    throw ConfigError(child_pointer(ptr, "g"), "expected \"step\", \"double_well\" or \"quadratic\"");
  read_optional(j, ptr, "grid_points", p.grid_points, read_index);
  read_optional(j, ptr, "half_width", p.half_width, read_positive);
  read_optional(j, ptr, "xi_half_width", p.xi_half_width, read_positive);
  read_optional(j, ptr, "terms", p.terms, read_index);
  read_optional(j, ptr, "radii", p.radii, read_numbers);
  read_optional(j, ptr, "theta", p.theta, read_numbers);
  read_optional(j, ptr, "mixing_grid", p.mixing_grid, read_numbers);
  read_optional(j, ptr, "bias", p.bias, read_number);
  read_optional(j, ptr, "rho", p.rho, read_positive);
  return p;
}

PdeProblem pde_from_json(const nlohmann::json& j, const std::string& ptr) {
  require_object(j, ptr,
                 {"meshes", "reference_factor", "xi_atoms", "xi_weights", "samples", "x_points", "x_max",
                  "control_weight", "rho", "seed"});
  PdeProblem p;
  read_optional(j, ptr, "meshes", p.meshes, read_indices);
  read_optional(j, ptr, "reference_factor", p.reference_factor, read_index);
  read_optional(j, ptr, "xi_atoms", p.xi_atoms, read_numbers);
  read_optional(j, ptr, "xi_weights", p.xi_weights, read_numbers);
  read_optional(j, ptr, "samples", p.samples, read_u64s);
  read_optional(j, ptr, "x_points", p.x_points, read_index);
  read_optional(j, ptr, "x_max", p.x_max, read_positive);
  read_optional(j, ptr, "control_weight", p.control_weight, read_number);
  read_optional(j, ptr, "rho", p.rho, read_positive);
  read_optional(j, ptr, "seed", p.seed, read_u64);
  return p;
}

PenaltyProblem penalty_from_json(const nlohmann::json& j, const std::string& ptr) {
  require_object(j, ptr,
                 {"m", "x_points", "x_half_width", "xi_offsets", "xi_weights", "terms", "samples_per_nu", "theta",
                  "cq_tol", "exact_measures", "rho", "seed"});
  PenaltyProblem p;
  read_optional(j, ptr, "m", p.m, read_number);
  read_optional(j, ptr, "x_points", p.x_points, read_index);
  read_optional(j, ptr, "x_half_width", p.x_half_width, read_positive);
  read_optional(j, ptr, "xi_offsets", p.xi_offsets, read_numbers);
  read_optional(j, ptr, "xi_weights", p.xi_weights, read_numbers);
  read_optional(j, ptr, "terms", p.terms, read_index);
  read_optional(j, ptr, "samples_per_nu", p.samples_per_nu, read_u64);
  read_optional(j, ptr, "theta", p.theta, read_numbers);
  read_optional(j, ptr, "cq_tol", p.cq_tol, read_positive);
  read_optional(j, ptr, "exact_measures", p.exact_measures, read_bool);
  read_optional(j, ptr, "rho", p.rho, read_positive);
  read_optional(j, ptr, "seed", p.seed, read_u64);
  return p;
}

}  // namespace epikit
