// Structured verdicts for every diagnostic in epikit.
#ifndef EPIKIT_REPORT_HPP
#define EPIKIT_REPORT_HPP

#include <string>
#include <vector>

#include "epikit/extreal.hpp"
#include "json.hpp"

namespace epikit {

enum class Verdict { pass, fail, hypothesis_unverified };

// Hypothesis stages gate the applicability of a theorem; conclusion stages
// carry the inequality being asserted; info stages never affect the verdict.
enum class StageKind { hypothesis, conclusion, info };

std::string to_string(Verdict v);
std::string to_string(StageKind k);

struct Stage {
  std::string name;
  StageKind kind = StageKind::conclusion;
  bool passed = true;
  // For inequalities lhs >= rhs the margin is lhs - rhs (worst case over all
  // points examined).
  ExtReal lhs{0.0};
  ExtReal rhs{0.0};
  ExtReal margin{0.0};
  std::vector<std::string> witnesses;
  nlohmann::json detail = nlohmann::json::object();
};

struct DiagnosticReport {
  std::string check;
  Verdict verdict = Verdict::pass;
  ExtReal lhs{0.0};
  ExtReal rhs{0.0};
  ExtReal margin{0.0};
  std::vector<std::string> witnesses;
  nlohmann::json schedules_used = nlohmann::json::object();
  std::size_t prefix_length = 0;
  std::vector<Stage> stages;
  nlohmann::json detail = nlohmann::json::object();

  Stage& add(Stage s);
  // Recomputes verdict, headline lhs/rhs/margin and witnesses from stages:
  // any failed conclusion gives fail, otherwise any failed hypothesis gives
  // hypothesis_unverified.
  void finalize();

  bool conclusion_holds() const;
  bool hypotheses_hold() const;
  // nullptr if absent.
  const Stage* stage(const std::string& name) const;
  bool stage_passed(const std::string& name) const;
};

nlohmann::json to_json(ExtReal v);
ExtReal extreal_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Stage& s);
nlohmann::json to_json(const DiagnosticReport& r);

}  // namespace epikit

#endif  // EPIKIT_REPORT_HPP
