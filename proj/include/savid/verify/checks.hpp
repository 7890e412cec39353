#pragma once

#include <functional>
#include <string>
#include <vector>

namespace savid::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Suite {
  std::string name;
  std::function<std::vector<CheckResult>()> run;
};

/// Finite differences against the analytic backward passes; max relative
/// error must stay below 1e-5.
std::vector<CheckResult> gradient_checks();

/// Production kernels against the slow reference implementations.
std::vector<CheckResult> oracle_checks();

/// RCE on the published clean/corrupted pair and the AP_corr flat-mean
/// identity.
std::vector<CheckResult> metric_arithmetic_checks();

/// Softmax sums, FFT round trip, attention rows, KGF bound, cosine
/// homogeneity and corruption monotonicity.
std::vector<CheckResult> invariant_checks();

/// Output shapes with C = 64, 8 heads, 7x7 windows, and recurrent state
/// counts for a 7-frame run.
std::vector<CheckResult> shape_checks();

/// All eight stage on/off combinations run and give pairwise distinct
/// fused features.
std::vector<CheckResult> ablation_checks();

/// The suites `savid selftest` runs.
std::vector<Suite> selftest_suites();

}  // namespace savid::verify
