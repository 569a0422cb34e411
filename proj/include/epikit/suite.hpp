// The acceptance battery: randomized and oracle-based checks of the envelope,
// Fatou and epi-convergence machinery plus the four reference apps. Results
// are deterministic given the base seed; no timings are recorded here.
#ifndef EPIKIT_SUITE_HPP
#define EPIKIT_SUITE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace epikit {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool passed = false;
  nlohmann::json detail = nlohmann::json::object();
};

struct SuiteOptions {
  std::uint64_t seed = 1;  // base seed of the randomized batteries
};

/// Number of criteria run_battery knows about (1..count).
int battery_size();
/// Runs criterion `id` (1-based). Throws std::out_of_range for unknown ids.
CriterionResult run_criterion(int id, const SuiteOptions& opt = {});
/// All criteria in order, or only the listed ids.
std::vector<CriterionResult> run_battery(const SuiteOptions& opt = {}, const std::vector<int>& only = {});

nlohmann::json to_json(const CriterionResult& r);
nlohmann::json to_json(const std::vector<CriterionResult>& rs);

}  // namespace epikit

#endif  // EPIKIT_SUITE_HPP
