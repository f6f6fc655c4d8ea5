// dsgd: run, sweep, verify and tv subcommands.
//
// Exit codes: 0 ok, 1 verification failure, 2 config or usage error,
// 3 numeric abort, 4 enumeration budget exceeded.

#include <cstdio>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>

#include <CLI11.hpp>

#include "dsgd/harness.hpp"
#include "dsgd/verify.hpp"

namespace {

using namespace dsgd;

enum Exit { kOk = 0, kVerifyFailed = 1, kConfig = 2, kNumeric = 3, kBudget = 4 };

std::string fixed(const std::optional<double>& x, const char* spec = "%.4f") {
  if (!x) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, spec, *x);
  return buf;
}

int cmd_run(const std::string& path) {
  const ExperimentConfig config = load_config(path);
  const RunResult result = run_experiment(config);
  const auto dir = resolve_output_dir(config.output_dir);
  write_run_outputs(result, dir);
  if (result.fault) {
    std::cerr << "numeric abort: " << result.error << "\n";
    return kNumeric;
  }
  if (!result.error.empty()) {
    std::cerr << "error: " << result.error << "\n";
    return kConfig;
  }
  const auto& last = result.trace.records.back();
  std::cout << "run " << config.name << ": " << result.trace.records.size() << " iterations, "
            << to_string(config.target.metric) << " "
            << fixed(metric_value(last, config.target.metric), "%.6g");
  if (result.target) {
    std::cout << ", passes to " << fixed(result.target, "%.3g") << " = "
              << fixed(result.passes_to_target, "%.3f");
  }
  std::cout << "\noutputs in " << dir.string() << "\n";
  return kOk;
}

int cmd_sweep(const std::string& path) {
  const ExperimentConfig config = load_config(path);
  const SweepResult result = run_sweep(config);
  const auto dir = resolve_output_dir(config.output_dir);
  write_sweep_outputs(result, config, dir);

  bool aborted = false;
  for (const auto& cr : result.cells) {
    std::cout << (cr.run.ok() ? "ok    " : "FAIL  ") << cr.cell.key();
    if (!cr.run.ok()) {
      std::cout << ": " << cr.run.error;
      aborted = aborted || cr.run.fault.has_value();
    }
    std::cout << "\n";
  }
  std::cout << "\nspeedup (target " << to_string(config.target.metric) << ")\n"
            << "  S  regime  h  rep  M  target  passes  alpha  speedup\n";
  for (const auto& row : result.speedups) {
    std::cout << "  " << row.epochs << "  " << to_string(row.regime) << "  " << row.rounds << "  "
              << row.replicate << "  " << row.workers << "  " << fixed(row.target, "%.4g") << "  "
              << fixed(row.entry.passes_to_target, "%.3f") << "  " << fixed(row.entry.alpha, "%.3f")
              << "  " << fixed(row.entry.speedup, "%.3f") << "\n";
  }
  std::cout << "\nregimes\n  M  S  h  rep  regime  target  passes\n";
  for (const auto& row : result.regimes) {
    std::cout << "  " << row.workers << "  " << row.epochs << "  " << row.rounds << "  "
              << row.replicate << "  " << to_string(row.regime) << "  " << fixed(row.target, "%.4g")
              << "  " << fixed(row.passes_to_target, "%.3f") << "\n";
  }
  std::cout << "\noutputs in " << dir.string() << "\n";
  return aborted ? kNumeric : kOk;
}

int cmd_verify(const VerifyOptions& options, const std::string& json_path) {
  const auto results = run_verify(options, [](const CheckResult& r) {
    std::cout << format_check_line(r) << std::endl;
  });
  if (!json_path.empty()) write_file_atomic(resolve_output_dir(json_path), checks_to_json(results));
  bool ok = true;
  for (const auto& r : results) ok = ok && r.pass;
  std::cout << (ok ? "all checks passed" : "verification FAILED") << "\n";
  return ok ? kOk : kVerifyFailed;
}

// "4" or "1..8".
std::pair<int, int> parse_range(const std::string& text) {
  static const std::regex single(R"(\s*(\d+)\s*)");
  static const std::regex range(R"(\s*(\d+)\s*\.\.\s*(\d+)\s*)");
  std::smatch m;
  if (std::regex_match(text, m, single)) {
    const int h = std::stoi(m[1]);
    return {h, h};
  }
  if (std::regex_match(text, m, range)) {
    const int a = std::stoi(m[1]), b = std::stoi(m[2]);
    if (a > b) throw InvalidArgument("empty round range '" + text + "'");
    return {a, b};
  }
  throw InvalidArgument("rounds must be N or A..B, got '" + text + "'");
}

int cmd_tv(const std::string& alg, const std::string& rounds, std::size_t n,
           const std::string& mode, std::uint64_t trials, std::uint64_t seed,
           const std::string& out_path) {
  const ShuffleAlgorithm algorithm = parse_shuffle_algorithm(alg);
  const auto [h0, h1] = parse_range(rounds);
  if (mode != "exact" && mode != "empirical" && mode != "formula") {
    throw InvalidArgument("mode must be exact, empirical or formula");
  }
  if (mode == "formula" && algorithm != ShuffleAlgorithm::Riffle) {
    throw InvalidArgument("formula mode is only available for the riffle shuffler");
  }
  RandomSource rng(seed);
  std::ostringstream curve;
  curve << "# h epsilon (" << alg << ", n=" << n << ", " << mode << ")\n";
  for (int h = h0; h <= h1; ++h) {
    const ShufflerSpec spec{algorithm, h};
    ShufflingErrorReport rep;
    if (mode == "exact") {
      rep = tv_exact(spec, n);
    } else if (mode == "empirical") {
      rep = tv_empirical(spec, n, trials, rng);
    } else {
      rep = tv_riffle_formula(h, n);
    }
    char value[32];
    std::snprintf(value, sizeof value, "%.6f", rep.epsilon);
    if (h0 == h1) {
      std::cout << value;
      if (rep.bias_scale) std::cout << "  (plug-in bias scale " << fixed(rep.bias_scale, "%.2g") << ")";
      std::cout << "\n";
    } else {
      std::cout << "h=" << h << " " << value << "\n";
    }
    curve << h << ' ' << value << '\n';
  }
  if (h0 != h1 || !out_path.empty()) {
    const std::string name = out_path.empty()
                                 ? "tv_" + alg + "_n" + std::to_string(n) + "_" + mode + ".dat"
                                 : out_path;
    const auto path = resolve_output_dir(name);
    write_file_atomic(path, curve.str());
    std::cout << "mixing curve written to " << path.string() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed SGD shuffling simulator"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
  run->add_option("config", config_path, "Config file")->required();

  std::string sweep_path;
  auto* sweep = app.add_subcommand("sweep", "Run the cross product of a config's sweep axes");
  sweep->add_option("config", sweep_path, "Config file")->required();

  VerifyOptions vopts;
  std::string json_path;
  auto* verify = app.add_subcommand("verify", "Run the verification battery");
  verify->add_option("--seed", vopts.seed, "Master seed for the randomized checks");
  verify->add_flag("--inject-biased-shuffler", vopts.inject_biased_shuffler,
                   "Negative control: feed the identity shuffler to the uniformity check");
  verify->add_option("--json", json_path, "Also write machine-readable records here");

  std::string alg = "riffle", rounds = "1", mode = "exact", tv_out;
  std::size_t n = 4;
  std::uint64_t trials = 1000000, tv_seed = 1;
  auto* tv = app.add_subcommand("tv", "Total-variation shuffling error");
  tv->set_help_flag("--help", "Print this help message and exit");
  tv->add_option("--alg", alg, "fisher-yates | riffle | top-to-random | identity");
  tv->add_option("--h", rounds, "Rounds, N or A..B");
  tv->add_option("--n", n, "Deck size")->required();
  tv->add_option("--mode", mode, "exact | empirical | formula (riffle only)");
  tv->add_option("--trials", trials, "Samples for empirical mode");
  tv->add_option("--seed", tv_seed, "Seed for empirical mode");
  tv->add_option("--out", tv_out, "Mixing-curve file (default under the output root)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*sweep) return cmd_sweep(sweep_path);
    if (*verify) return cmd_verify(vopts, json_path);
    if (*tv) return cmd_tv(alg, rounds, n, mode, trials, tv_seed, tv_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const BudgetExceeded& e) {
    std::cerr << "budget exceeded: " << e.what() << "\n"
              << "hint: use --mode empirical (or --mode formula for the riffle)\n";
    return kBudget;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kNumeric;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kVerifyFailed;
  }
  return kOk;
}
