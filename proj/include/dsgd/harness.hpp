#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dsgd/config.hpp"

namespace dsgd {

// ---------------------------------------------------------------------------
// Output files.

// Root for relative output directories: $DSGD_OUTPUT_ROOT, else the working
// directory.
std::filesystem::path output_root();
std::filesystem::path resolve_output_dir(const std::string& dir);

// Writes via a temporary file in the same directory and renames it into place,
// so readers never see a truncated file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Self-contained SVG line chart. Non-positive values are dropped on log axes.
std::string svg_line_chart(const std::vector<PlotSeries>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label,
                           bool log_x = true, bool log_y = true);

// ---------------------------------------------------------------------------
// Single runs.

// Everything a run needs that does not depend on the stream: data, objective
// with estimated constants, reference optimum (convex families) and w_0.
struct PreparedExperiment {
  Dataset data;
  ObjectiveSpec objective;
  std::optional<ReferenceOptimum> reference;
  ParamVector w0;
  double f0 = 0.0;  // F(w_0)
};

PreparedExperiment prepare_experiment(const ExperimentConfig& config);
StreamSpec make_stream_spec(const ExperimentConfig& config);
LrSchedule make_schedule(const ExperimentConfig& config, const PreparedExperiment& prepared,
                         const StreamSpec& stream);

// Dominant-term prediction matching the run's family, regime and shuffler;
// empty when a needed constant is unknown.
std::optional<RatePrediction> predicted_rate(const ExperimentConfig& config,
                                             const PreparedExperiment& prepared,
                                             const StreamSpec& stream);

struct RunResult {
  ExperimentConfig config;
  StreamSpec stream;
  LrSchedule schedule;
  ObjectiveConstants constants;
  std::optional<double> f_reference;  // F* or the configured lower bound
  bool reference_is_optimum = false;
  MetricsTrace trace;                 // partial when aborted
  std::optional<NumericFault> fault;
  std::string error;
  std::optional<double> target;
  std::optional<double> passes_to_target;
  std::optional<RatePrediction> prediction;

  bool ok() const { return !fault && error.empty(); }
};

// Non-finite values end the run with `fault` set and the partial trace kept.
RunResult run_experiment(const ExperimentConfig& config, const PreparedExperiment& prepared);
RunResult run_experiment(const ExperimentConfig& config);

std::string summary_json(const RunResult& result);
// Two columns: effective_passes and the configured metric.
std::string plot_data(const RunResult& result);

// trace.csv, summary.json, plot.dat and plot.svg in `dir`.
void write_run_outputs(const RunResult& result, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Sweeps.

struct SweepCell {
  std::size_t workers = 1;
  std::size_t epochs = 1;
  Regime regime = Regime::GlobalShuffle;
  int rounds = 0;
  std::uint64_t replicate = 0;
  std::uint64_t seed = 0;  // stream seed, a function of (base seed, replicate) only

  std::string key() const;
};

// Cross product of the sweep axes; an empty axis contributes the base value.
std::vector<SweepCell> sweep_cells(const ExperimentConfig& config);
ExperimentConfig cell_config(const ExperimentConfig& config, const SweepCell& cell);

struct CellResult {
  SweepCell cell;
  RunResult run;
};

struct SpeedupRow {
  std::size_t epochs = 0;
  Regime regime = Regime::GlobalShuffle;
  int rounds = 0;
  std::uint64_t replicate = 0;
  std::size_t workers = 1;
  std::optional<double> target;
  SpeedupEntry entry;
};

struct RegimeRow {
  std::size_t workers = 1;
  std::size_t epochs = 0;
  int rounds = 0;
  std::uint64_t replicate = 0;
  Regime regime = Regime::GlobalShuffle;
  std::optional<double> target;
  std::optional<double> passes_to_target;
};

struct SweepResult {
  std::vector<CellResult> cells;  // in sweep_cells order
  std::vector<SpeedupRow> speedups;
  std::vector<RegimeRow> regimes;
};

// Runs every cell (up to sweep.parallelism at a time). A failing cell is
// recorded and the sweep continues.
SweepResult run_sweep(const ExperimentConfig& config);

// cells.csv, speedup.csv, regimes.csv, plot.dat, plot.svg, summary.json and
// cells/<key>/trace.csv.
void write_sweep_outputs(const SweepResult& result, const ExperimentConfig& config,
                         const std::filesystem::path& dir);

}  // namespace dsgd
