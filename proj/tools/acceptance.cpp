// Runs criteria 1-11 and prints one PASS/FAIL line each. Exit 0 only if all pass.
//
//   acceptance [--seed N] [--work DIR] [--only ID ...]
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "cli.hpp"
#include "epikit/parallel.hpp"
#include "epikit/suite.hpp"

namespace fs = std::filesystem;

namespace {

// Wall-clock budgets in seconds; criteria without an entry are unbounded.
const std::map<int, double> kBudget = {{1, 10.0}, {4, 60.0}, {7, 30.0}, {10, 120.0}};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_suite_cli(const std::string& out_dir, unsigned threads, std::uint64_t seed) {
  const std::string t = std::to_string(threads), s = std::to_string(seed);
  const char* argv[] = {"epikit", "--threads", t.c_str(), "suite", "--seed", s.c_str(), "--out", out_dir.c_str()};
  std::ostringstream sink;
  return epikit::run_cli(static_cast<int>(std::size(argv)), argv, sink, sink);
}

// Every file in both directories, byte for byte.
bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    const auto other = b / e.path().filename();
    if (!fs::exists(other)) {
      why = e.path().filename().string() + " missing";
      return false;
    }
    if (slurp(e.path()) != slurp(other)) {
      why = e.path().filename().string() + " differs";
      return false;
    }
  }
  if (files != static_cast<std::size_t>(std::distance(fs::directory_iterator(b), fs::directory_iterator{}))) {
    why = "file sets differ";
    return false;
  }
  return files > 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance battery"};
  std::uint64_t seed = 1;
  std::string work = "acceptance-work";
  std::vector<int> only;
  app.add_option("--seed", seed);
  app.add_option("--work", work, "scratch directory for the determinism runs");
  app.add_option("--only", only);
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  epikit::SuiteOptions opt;
  opt.seed = seed;
  epikit::set_thread_count(1);
  bool all = true;
  nlohmann::json in_process = nlohmann::json::array();

  for (int id = 1; id <= epikit::battery_size(); ++id) {
    if (!wanted(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = epikit::run_criterion(id, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    in_process.push_back(epikit::to_json(r));
    bool ok = r.passed;
    std::ostringstream note;
    note.precision(3);
    note << secs << " s";
    if (auto b = kBudget.find(id); b != kBudget.end()) {
      note << " of " << b->second << " s";
      ok = ok && secs < b->second;
    }
    all = all && ok;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << r.title << " [" << note.str() << "]\n";
    if (!ok) std::cout << "  " << r.detail.dump() << '\n';
    std::cout.flush();
  }

  if (wanted(11)) {
    const fs::path root(work);
    fs::remove_all(root);
    const auto a = (root / "threads1").string(), b = (root / "threads8").string();
    const int ca = run_suite_cli(a, 1, seed);
    const int cb = run_suite_cli(b, 8, seed);
    std::string why;
    bool ok = ca == cb && same_tree(a, b, why);
    if (ca != cb) why = "exit codes differ";
    // Two runs: the in-process battery above and the command-line run.
    if (ok && only.empty()) {
      const auto doc = nlohmann::json::parse(slurp(fs::path(a) / "suite.json"));
      if (doc.at("criteria") != in_process) {
        ok = false;
        why = "suite.json differs from an independent run";
      }
    }
    all = all && ok;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion 11: suite outputs byte-identical across runs and thread counts"
              << (why.empty() ? "" : " [" + why + "]") << '\n';
  }
  return all ? 0 : 1;
}
