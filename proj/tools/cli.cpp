#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "epikit/apps.hpp"
#include "epikit/config.hpp"
#include "epikit/envelope.hpp"
#include "epikit/epi.hpp"
#include "epikit/parallel.hpp"
#include "epikit/suite.hpp"

namespace epikit {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Usage or IO problem: exit 1 with the message.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LogLevel { error, info, debug };

LogLevel log_level_from_env() {
  const char* v = std::getenv("EPIKIT_LOG");
  if (v == nullptr || *v == '\0') return LogLevel::error;
  const std::string s(v);
  if (s == "error") return LogLevel::error;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  throw UsageError("EPIKIT_LOG must be one of error, info, debug (got \"" + s + "\")");
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  LogLevel level = LogLevel::error;
  std::string config_path;
  std::string out_dir = "epikit-out";
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;

  void log(LogLevel at, const std::string& msg) const {
    if (at <= level) err << "epikit: " << msg << '\n';
  }
};

json read_config(const Context& ctx) {
  if (ctx.config_path.empty()) return json::object();
  std::ifstream in(ctx.config_path, std::ios::binary);
  if (!in) throw UsageError("cannot open config " + ctx.config_path);
  ctx.log(LogLevel::info, "reading " + ctx.config_path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("not valid JSON: ") + e.what());
  }
}

// Strips and checks the optional top-level schema_version.
json take_schema_version(json j) {
  if (!j.is_object()) throw ConfigError("", "expected an object");
  if (auto it = j.find("schema_version"); it != j.end()) {
    if (read_index(*it, "/schema_version") != 1) throw ConfigError("/schema_version", "unsupported schema version");
    j.erase("schema_version");
  }
  return j;
}

json take_member(json& j, const char* key) {
  json v;
  if (auto it = j.find(key); it != j.end()) {
    v = *it;
    j.erase(it);
  }
  return v;
}

void write_file(const Context& ctx, const std::string& name, const std::string& content) {
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec) throw UsageError("cannot create " + ctx.out_dir + ": " + ec.message());
  const fs::path path = fs::path(ctx.out_dir) / name;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << content;
  f.close();
  if (!f) throw UsageError("cannot write " + path.string());
  ctx.log(LogLevel::info, "wrote " + path.string());
}

void write_json(const Context& ctx, const std::string& name, const json& j) {
  write_file(ctx, name, j.dump(2) + "\n");
}

void write_resolved_config(const Context& ctx, const std::string& command, json resolved) {
  write_json(ctx, "config.json", {{"schema_version", 1}, {"command", command}, {"config", std::move(resolved)}});
}

int exit_code(Verdict v) {
  switch (v) {
    case Verdict::pass: return kExitPass;
    case Verdict::fail: return kExitFail;
    case Verdict::hypothesis_unverified: return kExitUnverified;
  }
  return kExitFail;
}

// Fail outranks hypothesis_unverified.
int combine(int a, int b) {
  if (a == kExitFail || b == kExitFail) return kExitFail;
  if (a == kExitUnverified || b == kExitUnverified) return kExitUnverified;
  return kExitPass;
}

void summarize(const Context& ctx, const DiagnosticReport& r) {
  ctx.out << r.check << ": " << to_string(r.verdict) << "  (margin " << to_string(r.margin) << ")\n";
  for (const auto& s : r.stages) {
    if (s.passed && ctx.level < LogLevel::debug) continue;
    ctx.out << "  " << (s.passed ? "ok    " : "FAILED") << ' ' << to_string(s.kind) << ' ' << s.name << "  margin "
            << to_string(s.margin);
    if (!s.witnesses.empty()) ctx.out << "  witness " << s.witnesses.front();
    ctx.out << '\n';
  }
}

MetricGrid read_grid_at(const json& j, const std::string& ptr) {
  require_object(j, ptr, {"points", "metric"});
  try {
    return grid_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError(ptr, e.what());
  }
}

DiscreteMeasure read_measure_at(const json& j, const std::string& ptr, const MetricGrid& g) {
  require_object(j, ptr, {"support", "weights"});
  try {
    return measure_from_json(j, g);
  } catch (const std::exception& e) {
    throw ConfigError(ptr, e.what());
  }
}

GridFunction read_values_at(const json& j, const std::string& ptr, Index expected) {
  GridFunction h;
  try {
    h = grid_function_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError(ptr, e.what());
  }
  if (h.size() != static_cast<Eigen::Index>(expected))
    throw ConfigError(ptr, "needs one value per grid point (" + std::to_string(expected) + ")");
  return h;
}

// --- envelope ---------------------------------------------------------------

std::string coordinate_or_index(const MetricGrid& g, Index i) {
  if (g.has_coords() && g.dim() == 1) return format_number(g.coord(i));
  return std::to_string(i);
}

int cmd_envelope(const Context& ctx) {
  const json j = take_schema_version(read_config(ctx));
  require_object(j, "", {"grid", "values", "kappas", "radii", "tol"});
  const auto grid = read_grid_at(require_member(j, "", "grid"), "/grid");
  const auto h = read_values_at(require_member(j, "", "values"), "/values", grid.size());
  auto kappas = kappa_schedule_for(h, grid);
  auto radii = default_regularization_radii(grid);
  double tol = 1e-9;
  read_optional(j, "", "kappas", kappas, read_numbers);
  read_optional(j, "", "radii", radii, read_numbers);
  read_optional(j, "", "tol", tol, read_positive);
  if (kappas.empty()) throw ConfigError("/kappas", "expected at least one modulus");
  for (std::size_t i = 0; i < kappas.size(); ++i)
    if (kappas[i] < 0.0 || (i > 0 && kappas[i] < kappas[i - 1]))
      throw ConfigError(child_pointer("/kappas", i), "moduli must be nonnegative and ascending");
  if (ctx.tol) tol = *ctx.tol;

  write_resolved_config(ctx, "envelope",
                        {{"grid", to_json(grid)},
                         {"values", grid_function_to_json(h)},
                         {"kappas", kappas},
                         {"radii", radii},
                         {"tol", tol}});

  json results = json::array();
  std::string csv = "kappa,x,value\n";
  for (double k : kappas) {
    const auto e = pasch_hausdorff(h, grid, k);
    results.push_back(to_json(e));
    for (Index i = 0; i < grid.size(); ++i)
      csv += format_number(k) + ',' + coordinate_or_index(grid, i) + ',' +
             format_number(e.values(static_cast<Eigen::Index>(i))) + '\n';
  }
  const auto report = check_envelope_convergence(h, grid, kappas, radii, tol);
  write_json(ctx, "envelope.json", {{"command", "envelope"}, {"envelopes", results}, {"report", to_json(report)}});
  write_file(ctx, "envelope.csv", csv);
  ctx.out << "envelope: " << kappas.size() << " moduli on " << grid.size() << " points\n";
  summarize(ctx, report);
  return exit_code(report.verdict);
}

// --- fatou-check / epi-check ------------------------------------------------

SequenceOnXi read_sequence_on_xi(const json& j, json& resolved) {
  require_object(j, "", {"xi_grid", "limit", "sequence", "schedules"});
  SequenceOnXi s;
  const auto grid = read_grid_at(require_member(j, "", "xi_grid"), "/xi_grid");
  const auto& lim = require_member(j, "", "limit");
  require_object(lim, "/limit", {"measure"});
  s.p = read_measure_at(require_member(lim, "/limit", "measure"), "/limit/measure", grid);
  const auto& seq = require_member(j, "", "sequence");
  if (!seq.is_array() || seq.empty()) throw ConfigError("/sequence", "expected a nonempty array");
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const auto ptr = child_pointer("/sequence", k);
    require_object(seq[k], ptr, {"values", "measure"});
    s.hs.push_back(read_values_at(require_member(seq[k], ptr, "values"), child_pointer(ptr, "values"), grid.size()));
    s.ps.push_back(read_measure_at(require_member(seq[k], ptr, "measure"), child_pointer(ptr, "measure"), grid));
  }
  const Index n = s.hs.size();
  s.limits = default_limit_schedule(n, grid, grid);
  Eigen::ArrayXXd table(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(grid.size()));
  for (Index k = 0; k < n; ++k) table.row(static_cast<Eigen::Index>(k)) = s.hs[k].transpose();
  s.ks = default_truncation_schedule(table);
  if (auto it = j.find("schedules"); it != j.end()) {
    const std::string ptr = "/schedules";
    require_object(*it, ptr, {"tail_start", "xi_radii", "ks", "tol"});
    read_optional(*it, ptr, "tail_start", s.limits.tail_start, read_index);
    read_optional(*it, ptr, "xi_radii", s.limits.xi_radii, read_numbers);
    read_optional(*it, ptr, "ks", s.ks, read_numbers);
    read_optional(*it, ptr, "tol", s.tol, read_positive);
    if (s.limits.tail_start >= n) throw ConfigError(ptr + "/tail_start", "must be below the sequence length");
    if (s.limits.xi_radii.size() < n) throw ConfigError(ptr + "/xi_radii", "needs one radius per sequence term");
    if (s.ks.empty()) throw ConfigError(ptr + "/ks", "expected at least one level");
  }
  json seq_out = json::array();
  for (Index k = 0; k < n; ++k)
    seq_out.push_back({{"values", grid_function_to_json(s.hs[k])}, {"measure", to_json(s.ps[k])}});
  resolved = {{"xi_grid", to_json(grid)},
              {"limit", {{"measure", to_json(s.p)}}},
              {"sequence", seq_out},
              {"schedules",
               {{"tail_start", s.limits.tail_start},
                {"xi_radii", s.limits.xi_radii},
                {"ks", s.ks},
                {"tol", s.tol}}}};
  return s;
}

ApproximationScheme read_scheme(const json& j, const Context& ctx) {
  auto s = scheme_from_json(j);
  if (ctx.tol) s.schedules.tol = *ctx.tol;
  return s;
}

int cmd_fatou(const Context& ctx) {
  json j = take_schema_version(read_config(ctx));
  std::string route = "envelope";
  if (auto v = take_member(j, "route"); !v.is_null()) route = read_string(v, "/route");
  DiagnosticReport report;
  json resolved;
  if (route == "envelope" || route == "weak") {
    const json points_j = take_member(j, "points");
    if (route == "envelope" && !points_j.is_null())
      throw ConfigError("/points", "only the weak route takes evaluation points");
    const auto s = read_scheme(j, ctx);
    std::vector<Index> points;
    if (!points_j.is_null()) {
      for (auto i : read_indices(points_j, "/points")) points.push_back(i);
      for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i] >= s.x_grid.size()) throw ConfigError(child_pointer("/points", i), "point outside the X-grid");
    }
    report = route == "envelope" ? parametric_fatou_envelope_route(s) : fatou_weak(s, points);
    resolved = to_json(s);
    if (route == "weak") resolved["points"] = points;
  } else if (route == "extended" || route == "upper") {
    auto s = read_sequence_on_xi(j, resolved);
    if (ctx.tol) {
      s.tol = *ctx.tol;
      resolved["schedules"]["tol"] = s.tol;
    }
    report = route == "extended" ? fatou_extended(s) : fatou_upper(s);
  } else {
    throw ConfigError("/route", "expected \"envelope\", \"weak\", \"extended\" or \"upper\"");
  }
  resolved["route"] = route;
  write_resolved_config(ctx, "fatou-check", resolved);
  write_json(ctx, "report.json", {{"command", "fatou-check"}, {"route", route}, {"report", to_json(report)}});
  summarize(ctx, report);
  return exit_code(report.verdict);
}

int cmd_epi(const Context& ctx) {
  json j = take_schema_version(read_config(ctx));
  std::string route = "weak";
  double rho = 1.0;
  if (auto v = take_member(j, "route"); !v.is_null()) route = read_string(v, "/route");
  if (route != "weak" && route != "expectations") throw ConfigError("/route", "expected \"weak\" or \"expectations\"");
  if (auto v = take_member(j, "rho"); !v.is_null()) rho = read_positive(v, "/rho");
  const auto s = read_scheme(j, ctx);
  json resolved = to_json(s);
  resolved["route"] = route;
  resolved["rho"] = rho;
  write_resolved_config(ctx, "epi-check", resolved);

  const auto report = route == "weak" ? epi_convergence_weak(s) : epi_convergence_expectations(s);
  const auto trace = expectation_trace(s);
  const auto limit = expectation_function(s.integrands.limit, s.p);
  std::string csv = "nu,min_value,argmin,epi_distance\n";
  json rows = json::array();
  for (std::size_t k = 0; k < trace.size(); ++k) {
    Eigen::Index at = 0;
    const double v = trace[k].minCoeff(&at);
    const double aw = attouch_wets_distance(trace[k], limit, s.x_grid, rho);
    csv += std::to_string(k + 1) + ',' + format_number(v) + ',' + std::to_string(at) + ',' + format_number(aw) + '\n';
    rows.push_back({{"nu", k + 1}, {"min_value", to_json(ExtReal(v))}, {"argmin", at}, {"epi_distance", aw}});
  }
  json doc = {{"command", "epi-check"}, {"route", route}, {"report", to_json(report)}, {"trace", rows}};
  int code = exit_code(report.verdict);
  summarize(ctx, report);
  // Minimizer transfer is only asserted once the expectation functions epi-converge.
  if (report.verdict == Verdict::pass) {
    const auto mins =
        check_minimizer_transfer(trace, limit, s.x_grid, s.schedules.limits.tail_start, s.schedules.tol);
    doc["minimizers"] = to_json(mins);
    summarize(ctx, mins);
    code = combine(code, exit_code(mins.verdict));
  }
  write_json(ctx, "report.json", doc);
  write_file(ctx, "trace.csv", csv);
  return code;
}

// --- app / suite ------------------------------------------------------------

int finish_app(const Context& ctx, const json& problem, const AppRun& run) {
  write_resolved_config(ctx, "app " + run.app, problem);
  write_json(ctx, "run.json", to_json(run));
  write_file(ctx, "trace.csv", trace_csv(run.trace));
  if (!run.trace.empty()) {
    const auto& last = run.trace.back();
    ctx.out << run.app << ": nu " << format_number(last.nu) << "  estimate " << format_number(last.estimate)
            << "  value " << format_number(last.value) << "  violation " << format_number(last.violation)
            << "  epi-distance " << format_number(last.epi_distance) << '\n';
  }
  summarize(ctx, run.report);
  return exit_code(run.report.verdict);
}

int cmd_app(const Context& ctx, const std::string& which) {
  const json j = take_schema_version(read_config(ctx));
  if (which == "sieve") {
    auto p = sieve_from_json(j);
    if (ctx.seed) p.seed = *ctx.seed;
    return finish_app(ctx, to_json(p), run_sieve(p));
  }
  if (which == "mollify") {
    const auto p = mollifier_from_json(j);
    return finish_app(ctx, to_json(p), run_mollifier(p));
  }
  if (which == "pde") {
    auto p = pde_from_json(j);
    if (ctx.seed) p.seed = *ctx.seed;
    return finish_app(ctx, to_json(p), run_pde(p));
  }
  auto p = penalty_from_json(j);
  if (ctx.seed) p.seed = *ctx.seed;
  return finish_app(ctx, to_json(p), run_penalty(p));
}

int cmd_suite(const Context& ctx, std::vector<int> only) {
  const json j = take_schema_version(read_config(ctx));
  require_object(j, "", {"seed", "criteria"});
  SuiteOptions opt;
  if (auto it = j.find("seed"); it != j.end()) opt.seed = read_index(*it, "/seed");
  if (ctx.seed) opt.seed = *ctx.seed;
  if (only.empty())
    if (auto it = j.find("criteria"); it != j.end())
      for (auto id : read_indices(*it, "/criteria")) only.push_back(static_cast<int>(id));
  for (std::size_t i = 0; i < only.size(); ++i)
    if (only[i] < 1 || only[i] > battery_size())
      throw ConfigError(child_pointer("/criteria", i), "no such criterion");
  std::vector<int> ids = only;
  if (ids.empty())
    for (int id = 1; id <= battery_size(); ++id) ids.push_back(id);
  write_resolved_config(ctx, "suite", {{"seed", opt.seed}, {"criteria", ids}});

  std::vector<CriterionResult> results;
  bool all = true;
  for (int id : ids) {
    ctx.log(LogLevel::info, "criterion " + std::to_string(id));
    results.push_back(run_criterion(id, opt));
    const auto& r = results.back();
    all = all && r.passed;
    ctx.out << "criterion " << r.id << ": " << (r.passed ? "PASS" : "FAIL") << "  " << r.title << '\n';
    if (ctx.level >= LogLevel::debug) ctx.err << r.detail.dump() << '\n';
  }
  write_json(ctx, "suite.json",
             {{"command", "suite"}, {"seed", opt.seed}, {"passed", all}, {"criteria", to_json(results)}});
  return all ? kExitPass : kExitFail;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Context ctx{out, err};
  try {
    ctx.level = log_level_from_env();
  } catch (const UsageError& e) {
    err << "epikit: " << e.what() << '\n';
    return kExitUsage;
  }

  CLI::App app{"epikit: envelopes, Fatou bounds and epi-convergence diagnostics on finite grids"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = 1;
  app.add_option("--threads", threads, "worker threads (results do not depend on this)")
      ->check(CLI::Range(1u, 256u));

  auto add_io = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", ctx.config_path, "JSON config file");
    if (config_required) opt->required();
    sub->add_option("--out", ctx.out_dir, "output directory")->capture_default_str();
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { ctx.seed = s; }, "random seed");
  };
  auto add_tol = [&](CLI::App* sub) {
    sub->add_option_function<double>("--tol", [&](double t) { ctx.tol = t; }, "tolerance override")
        ->check(CLI::PositiveNumber);
  };

  auto* envelope = app.add_subcommand("envelope", "envelopes of a grid function and their convergence");
  add_io(envelope, true);
  add_tol(envelope);
  auto* fatou = app.add_subcommand("fatou-check", "parametric and extended Fatou lower bounds");
  add_io(fatou, true);
  add_tol(fatou);
  auto* epi = app.add_subcommand("epi-check", "epi-convergence of expectation functions");
  add_io(epi, true);
  add_tol(epi);
  auto* apps = app.add_subcommand("app", "reference application schemes");
  apps->require_subcommand(1);
  auto* sieve = apps->add_subcommand("sieve", "histogram sieve maximum likelihood");
  auto* mollify = apps->add_subcommand("mollify", "mollified step minimization");
  auto* pde = apps->add_subcommand("pde", "finite-difference optimal control");
  auto* penalty = apps->add_subcommand("penalty", "expectation-constrained penalty scheme");
  for (auto* sub : {sieve, mollify, pde, penalty}) add_io(sub, false);
  for (auto* sub : {sieve, pde, penalty}) add_seed(sub);
  auto* suite = app.add_subcommand("suite", "run the acceptance battery");
  add_io(suite, false);
  add_seed(suite);
  std::vector<int> only;
  suite->add_option("--criteria", only, "run only these criterion ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help requests exit 0 through CLI11; every other parse error is a usage error.
    return app.exit(e, out, err) == 0 ? kExitPass : kExitUsage;
  }
  set_thread_count(threads);

  try {
    if (envelope->parsed()) return cmd_envelope(ctx);
    if (fatou->parsed()) return cmd_fatou(ctx);
    if (epi->parsed()) return cmd_epi(ctx);
    if (suite->parsed()) return cmd_suite(ctx, only);
    for (auto* sub : {sieve, mollify, pde, penalty})
      if (sub->parsed()) return cmd_app(ctx, sub->get_name());
  } catch (const ConfigError& e) {
    const std::string msg = std::string(e.what()).substr(e.pointer().size() + 2);
    err << "epikit: invalid config at " << (e.pointer().empty() ? "the document root" : e.pointer()) << ": " << msg
        << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "epikit: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "epikit: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace epikit
