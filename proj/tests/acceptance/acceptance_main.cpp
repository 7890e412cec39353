// One PASS/FAIL line per acceptance criterion; non-zero exit if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "savid/verify/checks.hpp"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;
using savid::verify::CheckResult;

struct Outcome {
  bool passed = true;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs a check group and folds it into one line, with an optional time limit.
Outcome run_group(const std::function<std::vector<CheckResult>()>& group, double limit_s) {
  const auto start = Clock::now();
  std::vector<CheckResult> results;
  Outcome o;
  try {
    results = group();
  } catch (const std::exception& e) {
    return {false, std::string("threw: ") + e.what()};
  }
  const double elapsed = seconds_since(start);
  std::size_t failed = 0;
  std::string first_failure;
  for (const CheckResult& r : results) {
    if (r.passed) continue;
    if (failed++ == 0) first_failure = r.name + ": " + r.detail;
  }
  o.passed = failed == 0 && !results.empty() && (limit_s <= 0.0 || elapsed < limit_s);
  std::ostringstream d;
  d << results.size() - failed << "/" << results.size() << " checks, " << elapsed << " s";
  if (limit_s > 0.0) d << " (limit " << limit_s << " s)";
  if (failed) d << "; first failure " << first_failure;
  o.detail = d.str();
  return o;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::current_path() / "acceptance_determinism";
  fs::remove_all(root);
  const std::string config = std::string(SAVID_SOURCE_DIR) + "/config/default.yaml";
  std::vector<std::string> docs;
  std::ostringstream d;
  for (int run = 1; run <= 2; ++run) {
    const fs::path out = root / ("run" + std::to_string(run));
    const std::string cmd = std::string("\"") + SAVID_CLI + "\" robustness --config \"" + config + "\" --out \"" +
                            out.string() + "\" > \"" + (root.string() + "_run" + std::to_string(run) + ".log") +
                            "\" 2>&1";
    const auto start = Clock::now();
    const int rc = std::system(cmd.c_str());
    const double elapsed = seconds_since(start);
    d << "run " << run << " " << elapsed << " s; ";
    if (rc != 0) return {false, d.str() + "exit status " + std::to_string(rc)};
    if (elapsed >= 600.0) return {false, d.str() + "over the 600 s limit"};
    if (!fs::exists(out / "robustness.json")) return {false, d.str() + "no robustness.json"};
    docs.push_back(read_file(out / "robustness.json"));
  }
  const bool same = docs[0] == docs[1];
  d << (same ? "byte-identical" : "outputs differ");
  return {same, d.str()};
}

}  // namespace

int main() {
  namespace v = savid::verify;
  struct Criterion {
    std::string name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"gradient checks below 1e-5 within 30 s", [] { return run_group(v::gradient_checks, 30.0); }},
      {"oracle agreement within 60 s", [] { return run_group(v::oracle_checks, 60.0); }},
      {"RCE and AP_corr arithmetic", [] { return run_group(v::metric_arithmetic_checks, 0.0); }},
      {"numerical invariants within 2 min", [] { return run_group(v::invariant_checks, 120.0); }},
      {"output shapes and recurrent state counts", [] { return run_group(v::shape_checks, 0.0); }},
      {"stage ablation grid distinct", [] { return run_group(v::ablation_checks, 0.0); }},
      {"robustness sweep deterministic within 10 min", determinism},
  };
  bool all = true;
  for (const Criterion& c : criteria) {
    const Outcome o = c.run();
    std::printf("%s  %s: %s\n", o.passed ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    all = all && o.passed;
  }
  return all ? 0 : 1;
}
