#include "epikit/report.hpp"

#include <stdexcept>

namespace epikit {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::hypothesis_unverified: return "hypothesis-unverified";
  }
  return "fail";
}

std::string to_string(StageKind k) {
  switch (k) {
    case StageKind::hypothesis: return "hypothesis";
    case StageKind::conclusion: return "conclusion";
    case StageKind::info: return "info";
  }
  return "info";
}

Stage& DiagnosticReport::add(Stage s) {
  if (!s.passed && s.witnesses.empty()) s.witnesses.push_back(s.name);
  stages.push_back(std::move(s));
  return stages.back();
}

void DiagnosticReport::finalize() {
  bool hyp_ok = true;
  bool concl_ok = true;
  bool have_conclusion = false;
  witnesses.clear();
  for (const auto& s : stages) {
    if (s.kind == StageKind::info) continue;
    if (s.kind == StageKind::hypothesis) hyp_ok = hyp_ok && s.passed;
    if (s.kind == StageKind::conclusion) {
      concl_ok = concl_ok && s.passed;
      if (!have_conclusion || s.margin < margin) {
        lhs = s.lhs;
        rhs = s.rhs;
        margin = s.margin;
      }
      have_conclusion = true;
    }
    if (!s.passed) {
      for (const auto& w : s.witnesses) witnesses.push_back(s.name + ": " + w);
    }
  }
  // An observed failure of the asserted property outranks missing hypotheses.
  if (!concl_ok) {
    verdict = Verdict::fail;
  } else if (!hyp_ok) {
    verdict = Verdict::hypothesis_unverified;
  } else {
    verdict = Verdict::pass;
  }
}

bool DiagnosticReport::conclusion_holds() const {
  for (const auto& s : stages)
    if (s.kind == StageKind::conclusion && !s.passed) return false;
  return true;
}

bool DiagnosticReport::hypotheses_hold() const {
  for (const auto& s : stages)
    if (s.kind == StageKind::hypothesis && !s.passed) return false;
  return true;
}

const Stage* DiagnosticReport::stage(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

bool DiagnosticReport::stage_passed(const std::string& name) const {
  const Stage* s = stage(name);
  if (s == nullptr) throw std::out_of_range("no stage named " + name);
  return s->passed;
}

nlohmann::json to_json(ExtReal v) {
  if (v.is_plus_inf()) return "+inf";
  if (v.is_minus_inf()) return "-inf";
  return v.value();
}

ExtReal extreal_from_json(const nlohmann::json& j) {
  if (j.is_number()) return ExtReal(j.get<double>());
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "+inf" || s == "inf") return ExtReal::plus_inf();
    if (s == "-inf") return ExtReal::minus_inf();
  }
  throw std::invalid_argument("expected a number, \"+inf\" or \"-inf\"");
}

nlohmann::json to_json(const Stage& s) {
  return nlohmann::json{{"name", s.name},           {"kind", to_string(s.kind)},
                        {"passed", s.passed},       {"lhs", to_json(s.lhs)},
                        {"rhs", to_json(s.rhs)},    {"margin", to_json(s.margin)},
                        {"witnesses", s.witnesses}, {"detail", s.detail}};
}

nlohmann::json to_json(const DiagnosticReport& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) stages.push_back(to_json(s));
  return nlohmann::json{{"check", r.check},
                        {"verdict", to_string(r.verdict)},
                        {"lhs", to_json(r.lhs)},
                        {"rhs", to_json(r.rhs)},
                        {"margin", to_json(r.margin)},
                        {"witnesses", r.witnesses},
                        {"schedules_used", r.schedules_used},
                        {"prefix_length", r.prefix_length},
                        {"stages", stages},
                        {"detail", r.detail}};
}

}  // namespace epikit
