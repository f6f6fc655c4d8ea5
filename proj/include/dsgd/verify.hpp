#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace dsgd {

struct CheckResult {
  std::string name;
  std::map<std::string, std::string> params;
  std::string observed;
  std::string expected;
  bool pass = false;
  std::string detail;  // first failing case, if any
  double seconds = 0.0;
};

struct VerifyOptions {
  std::uint64_t seed = 2024;
  // Negative control: the uniform-shuffle check is fed the identity shuffler.
  bool inject_biased_shuffler = false;
  std::uint64_t tv_samples = 1000000;
  std::uint64_t lemma_trials = 100000;
};

// Every conditional batch-tuple probability of a uniform global shuffle equals
// 1 / (T - t), for n in {4, 6} and (M, b) in {(1,1), (2,1), (1,2)}.
CheckResult check_uniform_conditionals(const VerifyOptions& options);
// Riffle at the smallest h with eps <= b M / n (n = 4, M = b = 1): the
// conditional gap stays within 4 n eps / (n - b M t) for every t + 1 < T.
CheckResult check_riffle_gap_bound(const VerifyOptions& options);
// Monte-Carlo expectation identity for 20 random sequences, n = 6, all (t, b).
CheckResult check_batch_mean_identity(const VerifyOptions& options);
// Exact vs sampled TV for riffle and top-to-random, n in {3, 4}, h in {1, 2, 4};
// Fisher-Yates exactly uniform.
CheckResult check_tv_oracles(const VerifyOptions& options);
// Central finite differences on all three families at 100 random points.
CheckResult check_gradients(const VerifyOptions& options);
// (M, b) and (1, M b) produce the same iterates over 100 steps.
CheckResult check_aggregation(const VerifyOptions& options);

// Runs the whole battery in order, calling `on_result` after each check.
std::vector<CheckResult> run_verify(const VerifyOptions& options,
                                    const std::function<void(const CheckResult&)>& on_result = {});

std::string format_check_line(const CheckResult& result);
// JSON array of records {name, params, observed, expected, pass, detail, seconds}.
std::string checks_to_json(const std::vector<CheckResult>& results);

}  // namespace dsgd
