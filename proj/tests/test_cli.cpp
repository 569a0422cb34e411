#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "epikit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = epikit::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("epikit_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  const auto p = dir / name;
  std::ofstream(p, std::ios::binary) << j.dump();
  return p;
}

json grid_1d(std::initializer_list<double> xs) {
  json pts = json::array();
  for (double x : xs) pts.push_back({x});
  return {{"points", pts}};
}

}  // namespace

TEST_CASE("envelope of a step on five points") {
  const auto dir = scratch("envelope");
  // h = 0 left of 0, 1 from 0 on; kappa 1 on spacing 0.5 gives 0.5 at x = 0.
  const auto cfg = write_config(dir, "step.json",
                                {{"grid", grid_1d({-1, -0.5, 0, 0.5, 1})},
                                 {"values", {0, 0, 1, 1, "+inf"}},
                                 {"kappas", {0.0, 1.0}}});
  const auto r = cli({"envelope", "--config", cfg.string(), "--out", (dir / "out").string()});
  // kappa = 1 cannot lift the envelope to the jump, so convergence is a fail.
  CHECK(r.code == 2);
  const auto csv = slurp(dir / "out" / "envelope.csv");
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(csv.rfind("kappa,x,value\n", 0) == 0);
  CHECK(csv.find("1,0,0.5\n") != std::string::npos);
  CHECK(csv.find("1,1,1.5\n") != std::string::npos);
  CHECK(csv.find("0,1,0\n") != std::string::npos);
  const auto doc = json::parse(slurp(dir / "out" / "envelope.json"));
  CHECK(doc.at("envelopes").size() == 2);
  const auto echoed = json::parse(slurp(dir / "out" / "config.json"));
  CHECK(echoed.at("command") == "envelope");
  CHECK(echoed.at("config").at("values").at(4) == "+inf");
  CHECK(echoed.at("config").contains("radii"));  // defaults filled in
  CHECK(echoed.at("config").at("tol") == doctest::Approx(1e-9));
}

TEST_CASE("all-infinite grid function writes +inf tokens") {
  const auto dir = scratch("allinf");
  const auto cfg = write_config(dir, "c.json",
                                {{"grid", grid_1d({0, 1})}, {"values", {"+inf", "+inf"}}, {"kappas", {1.0}}});
  const auto r = cli({"envelope", "--config", cfg.string(), "--out", (dir / "out").string()});
  CHECK(r.code != 1);
  CHECK(slurp(dir / "out" / "envelope.csv") == "kappa,x,value\n1,0,+inf\n1,1,+inf\n");
}

TEST_CASE("malformed configs exit 1 naming the JSON pointer") {
  const auto dir = scratch("bad");
  SUBCASE("unknown field") {
    const auto cfg = write_config(dir, "c.json", {{"grid", grid_1d({0, 1})}, {"values", {0, 1}}, {"colour", 1}});
    const auto r = cli({"envelope", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("/colour") != std::string::npos);
  }
  SUBCASE("wrong value length") {
    const auto cfg = write_config(dir, "c.json", {{"grid", grid_1d({0, 1})}, {"values", {0, 1, 2}}});
    const auto r = cli({"envelope", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("/values") != std::string::npos);
  }
  SUBCASE("nested app field") {
    const auto cfg = write_config(dir, "c.json", {{"meshes", {8, "sixteen"}}});
    const auto r = cli({"app", "pde", "--config", cfg.string(), "--out", (dir / "o").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("/meshes/1") != std::string::npos);
  }
  SUBCASE("bad schema version") {
    const auto cfg = write_config(dir, "c.json", {{"schema_version", 2}});
    CHECK(cli({"app", "penalty", "--config", cfg.string(), "--out", (dir / "o").string()}).code == 1);
  }
  SUBCASE("not JSON") {
    std::ofstream(dir / "c.json") << "{\"m\": ";
    CHECK(cli({"app", "penalty", "--config", (dir / "c.json").string(), "--out", (dir / "o").string()}).code == 1);
  }
  SUBCASE("missing file") {
    CHECK(cli({"app", "penalty", "--config", (dir / "none.json").string()}).code == 1);
  }
}

TEST_CASE("usage errors exit 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"bogus"}).code == 1);
  CHECK(cli({"app"}).code == 1);
  CHECK(cli({"envelope"}).code == 1);  // --config is required
  CHECK(cli({"app", "mollify", "--seed", "3"}).code == 1);
  CHECK(cli({"--threads", "0", "suite"}).code == 1);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("penalty with mean 1 ends within two grid spacings of 1") {
  const auto dir = scratch("penalty");
  const auto cfg = write_config(dir, "penalty_m1.json", {{"m", 1.0}});
  const auto r = cli({"app", "penalty", "--config", cfg.string(), "--out", (dir / "out").string()});
  CHECK(r.code == 0);
  const auto run = json::parse(slurp(dir / "out" / "run.json"));
  const auto& cfg_used = run.at("config");
  const double dx = 2.0 * cfg_used.at("x_half_width").get<double>() / (cfg_used.at("x_points").get<double>() - 1.0);
  CHECK(std::abs(run.at("trace").back().at("estimate").get<double>() - 1.0) <= 2.0 * dx);
  const auto csv = slurp(dir / "out" / "trace.csv");
  CHECK(csv.rfind("nu,estimate,value,violation,epi_distance,d_P\n", 0) == 0);
  CHECK(json::parse(slurp(dir / "out" / "config.json")).at("config").at("m") == 1.0);
}

TEST_CASE("verdicts map to exit codes") {
  const auto dir = scratch("verdicts");
  const json xi = grid_1d({0, 1});
  // h^nu = (0, -nu) with mass 1/nu on the second point: the lower bound fails.
  json seq = json::array();
  for (int k = 1; k <= 32; ++k)
    seq.push_back({{"values", {0, -k}}, {"measure", {{"support", {0, 1}}, {"weights", {1.0 - 1.0 / k, 1.0 / k}}}}});
  seq[0]["measure"] = {{"support", {1}}, {"weights", {1.0}}};
  const json esc = {{"route", "extended"},
                    {"xi_grid", xi},
                    {"limit", {{"measure", {{"support", {0}}, {"weights", {1.0}}}}}},
                    {"sequence", seq},
                    {"schedules", {{"ks", {1, 2, 4, 8}}}}};
  CHECK(cli({"fatou-check", "--config", write_config(dir, "esc.json", esc).string(), "--out",
             (dir / "esc").string()})
            .code == 2);

  // Constant sequence h^nu = h with P^nu = P: everything passes.
  json calm = esc;
  for (auto& term : calm["sequence"]) {
    term["values"] = {0, 1};
    term["measure"] = {{"support", {0}}, {"weights", {1.0}}};
  }
  CHECK(cli({"fatou-check", "--config", write_config(dir, "calm.json", calm).string(), "--out",
             (dir / "calm").string()})
            .code == 0);

  // Upward offset that never vanishes: the recovery leg fails.
  const json x = grid_1d({-1, 0, 1});
  auto table = [](double shift) { return json{{shift + 1, shift, shift + 1}}; };
  const json meas = {{"support", {0}}, {"weights", {1.0}}};
  json terms = json::array();
  for (int k = 0; k < 8; ++k) terms.push_back({{"integrand", table(5.0)}, {"measure", meas}});
  const json scheme = {{"x_grid", x},
                       {"xi_grid", grid_1d({0})},
                       {"limit", {{"integrand", table(0.0)}, {"measure", meas}}},
                       {"sequence", terms}};
  CHECK(cli({"epi-check", "--config", write_config(dir, "up.json", scheme).string(), "--out",
             (dir / "up").string()})
            .code == 2);
  json stat = scheme;
  for (auto& term : stat["sequence"]) term["integrand"] = table(0.0);
  const auto ok = cli({"epi-check", "--config", write_config(dir, "stat.json", stat).string(), "--out",
                       (dir / "stat").string()});
  CHECK(ok.code == 0);
  CHECK(slurp(dir / "stat" / "trace.csv").rfind("nu,min_value,argmin,epi_distance\n1,0,1,0\n", 0) == 0);
}

TEST_CASE("outputs do not depend on the thread count") {
  const auto dir = scratch("threads");
  const auto a = cli({"--threads", "1", "app", "pde", "--seed", "5", "--out", (dir / "a").string()});
  const auto b = cli({"--threads", "4", "app", "pde", "--seed", "5", "--out", (dir / "b").string()});
  CHECK(a.code == b.code);
  for (const char* f : {"config.json", "run.json", "trace.csv"}) CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  const auto c = cli({"--threads", "2", "suite", "--criteria", "1", "3", "--out", (dir / "s1").string()});
  const auto d = cli({"--threads", "3", "suite", "--criteria", "1", "3", "--out", (dir / "s2").string()});
  CHECK(c.code == 0);
  CHECK(slurp(dir / "s1" / "suite.json") == slurp(dir / "s2" / "suite.json"));
  CHECK(cli({"suite", "--criteria", "12"}).code == 1);
}
