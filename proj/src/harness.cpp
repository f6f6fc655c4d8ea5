#include "dsgd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "dsgd/datasets.hpp"

namespace dsgd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : ""; }

json opt_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }

json record_json(const MetricRecord& r) {
  return {{"epoch", r.epoch},
          {"iter", r.iter},
          {"effective_passes", r.effective_passes},
          {"objective", r.objective},
          {"f_gap", opt_json(r.f_gap)},
          {"dist_sq", opt_json(r.dist_sq)},
          {"grad_norm_sq", r.grad_norm_sq},
          {"lr", r.lr}};
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string trace_csv(const MetricsTrace& trace) {
  std::ostringstream out;
  write_trace_csv(out, trace);
  return out.str();
}

PlotSeries metric_series(const std::string& label, const MetricsTrace& trace, TraceMetric metric) {
  PlotSeries s;
  s.label = label;
  for (const auto& r : trace.records) {
    if (auto v = metric_value(r, metric)) {
      s.x.push_back(r.effective_passes);
      s.y.push_back(*v);
    }
  }
  return s;
}

double factorial_or_inf(std::size_t n) {
  double f = 1.0;
  for (std::size_t k = 2; k <= n; ++k) f *= static_cast<double>(k);
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------

fs::path output_root() {
  if (const char* env = std::getenv("DSGD_OUTPUT_ROOT"); env && *env) return fs::path(env);
  return fs::current_path();
}

fs::path resolve_output_dir(const std::string& dir) {
  const fs::path p(dir);
  return p.is_absolute() ? p : output_root() / p;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string svg_line_chart(const std::vector<PlotSeries>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label, bool log_x,
                           bool log_y) {
  const double W = 760, H = 480, left = 80, right = 190, top = 40, bottom = 60;
  auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return log_y ? std::log10(v) : v; };

  std::vector<std::vector<std::pair<double, double>>> pts(series.size());
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if ((log_x && !(s.x[i] > 0)) || (log_y && !(s.y[i] > 0))) continue;
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const double a = tx(s.x[i]), b = ty(s.y[i]);
      pts[k].emplace_back(a, b);
      x0 = std::min(x0, a), x1 = std::max(x1, a), y0 = std::min(y0, b), y1 = std::max(y1, b);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double a) { return left + (a - x0) / (x1 - x0) * pw; };
  auto py = [&](double b) { return top + (1.0 - (b - y0) / (y1 - y0)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(title) << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";

  auto ticks = [](double lo, double hi, bool log) {
    std::vector<double> t;
    if (log && hi - lo >= 1.0) {
      for (double d = std::ceil(lo); d <= hi + 1e-9; d += 1.0) t.push_back(d);
    } else {
      for (int k = 0; k <= 4; ++k) t.push_back(lo + (hi - lo) * k / 4.0);
    }
    return t;
  };
  auto label = [](double v, bool log) {
    char buf[32];
    if (log) {
      std::snprintf(buf, sizeof buf, "%.3g", std::pow(10.0, v));
    } else {
      std::snprintf(buf, sizeof buf, "%.3g", v);
    }
    return std::string(buf);
  };
  for (double a : ticks(x0, x1, log_x)) {
    svg << "<line x1=\"" << px(a) << "\" y1=\"" << top + ph << "\" x2=\"" << px(a) << "\" y2=\""
        << top + ph + 5 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << px(a) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
        << label(a, log_x) << "</text>\n";
  }
  for (double b : ticks(y0, y1, log_y)) {
    svg << "<line x1=\"" << left - 5 << "\" y1=\"" << py(b) << "\" x2=\"" << left << "\" y2=\""
        << py(b) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << py(b) + 4 << "\" text-anchor=\"end\">"
        << label(b, log_y) << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
      << xml_escape(x_label) << (log_x ? " (log)" : "") << "</text>\n";
  svg << "<text transform=\"translate(18," << top + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(y_label)
      << (log_y ? " (log)" : "") << "</text>\n";

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = palette[k % 10];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [a, b] : pts[k]) svg << px(a) << ',' << py(b) << ' ';
    svg << "\"/>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(k);
    svg << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + pw + 36 << "\" y=\"" << ly + 4 << "\">"
        << xml_escape(series[k].label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

// ---------------------------------------------------------------------------

PreparedExperiment prepare_experiment(const ExperimentConfig& c) {
  validate_config(c);
  PreparedExperiment p;
  const auto& d = c.data;
  if (d.generator == "quadratic-centers") {
    p.data = quadratic_centers(d.n, d.dim, d.seed, d.spread, d.order);
    p.objective = ObjectiveSpec::quadratic(
        geometric_spectrum(d.dim, c.objective.mu, c.objective.kappa * c.objective.mu));
  } else if (d.generator == "synthetic-logistic") {
    p.data = synthetic_logistic(d.n, d.dim, d.seed, d.scale, d.label_noise, d.order);
    p.objective = ObjectiveSpec::logistic(
        c.objective.lambda.value_or(1.0 / std::sqrt(static_cast<double>(d.n))));
  } else {
    p.data = gaussian_blobs(d.n, d.dim, d.classes, d.seed, d.separation, d.order);
    MlpParams mlp;
    mlp.hidden = c.objective.hidden;
    mlp.classes = d.classes;
    mlp.activation = c.objective.activation == "sigmoid" ? Activation::Sigmoid : Activation::Tanh;
    mlp.lambda = c.objective.weight_decay;
    p.objective = ObjectiveSpec::mlp(mlp);
  }
  RandomSource rng(c.constants.seed);
  p.objective = estimate_constants(p.objective, p.data, c.constants.samples, c.constants.radius, rng);
  if (!p.objective.is_mlp()) p.reference = solve_reference_optimum(p.objective, p.data);
  p.w0 = default_initial_point(p.objective, p.data, c.init_seed);
  p.f0 = full_objective(p.objective, p.data, p.w0).value;
  return p;
}

StreamSpec make_stream_spec(const ExperimentConfig& c) {
  StreamSpec s{c.stream.regime,
               c.data.n,
               c.stream.workers,
               c.stream.batch_size,
               c.stream.epochs,
               {c.stream.shuffler, c.stream.rounds},
               c.stream.seed};
  s.validate();
  return s;
}

LrSchedule make_schedule(const ExperimentConfig& c, const PreparedExperiment& p,
                         const StreamSpec& stream) {
  const auto& k = c.schedule;
  const auto& consts = p.objective.constants;
  switch (k.kind) {
    case LrKind::StronglyConvexDecay: {
      const auto mu = k.mu ? k.mu : consts.mu;
      if (!mu) throw InvalidArgument("strongly-convex-decay needs mu");
      return LrSchedule::strongly_convex(*mu, k.numerator);
    }
    case LrKind::ConvexSqrtDecay: {
      const auto L = k.lipschitz ? k.lipschitz : consts.lipschitz;
      if (!L) throw InvalidArgument("convex-sqrt-decay needs L");
      return LrSchedule::convex_sqrt(*L);
    }
    case LrKind::NonConvexConstant: {
      if (!consts.rho || !consts.b_sq) throw InvalidArgument("non-convex-constant needs rho and B^2");
      const double f_ref = p.reference ? p.reference->f_star : c.f_lower_bound;
      NonConvexParams params;
      params.rho = *consts.rho;
      params.b_sq = *consts.b_sq;
      params.batch_size = stream.batch_size;
      params.workers = stream.workers;
      params.iterations_per_epoch = stream.iterations_per_epoch();
      params.epochs = stream.epochs;
      params.initial_gap = std::max(0.0, p.f0 - f_ref);
      params.scale_with_workers = k.scale_with_workers;
      return LrSchedule::non_convex_constant(params);
    }
    case LrKind::UserConstant:
      return LrSchedule::constant(k.eta.value_or(0.0));
  }
  throw InvalidArgument("unknown schedule");
}

std::optional<RatePrediction> predicted_rate(const ExperimentConfig& c,
                                             const PreparedExperiment& p,
                                             const StreamSpec& s) {
  const auto& consts = p.objective.constants;
  RateParams params;
  params.n = static_cast<double>(s.n);
  params.workers = static_cast<double>(s.workers);
  params.batch_size = static_cast<double>(s.batch_size);
  params.epochs = static_cast<double>(s.epochs);
  params.kappa = consts.kappa;
  params.mu = consts.mu;
  params.rho = consts.rho;
  params.initial_gap =
      std::max(0.0, p.f0 - (p.reference ? p.reference->f_star : c.f_lower_bound));

  const bool shuffled = s.regime == Regime::GlobalShuffle || s.regime == Regime::LocalShuffle;
  const bool insufficient = shuffled && s.shuffler.algorithm != ShuffleAlgorithm::FisherYates;
  if (insufficient) {
    switch (s.shuffler.algorithm) {
      case ShuffleAlgorithm::Identity:
        params.epsilon = 1.0 - 1.0 / factorial_or_inf(s.n);
        break;
      case ShuffleAlgorithm::Riffle:
        params.epsilon = tv_riffle_formula(s.shuffler.rounds, s.n).epsilon;
        break;
      default:
        if (s.n <= EnumerationLimits{}.max_n) params.epsilon = tv_exact(s.shuffler, s.n).epsilon;
        break;
    }
  }

  Theorem theorem;
  if (p.objective.is_mlp()) {
    theorem = insufficient ? Theorem::T5_2NonConvex : Theorem::T3_3;
  } else if (c.schedule.kind == LrKind::ConvexSqrtDecay) {
    theorem = insufficient ? Theorem::T5_2Convex : Theorem::T3_2;
  } else if (insufficient) {
    theorem = Theorem::T5_2StronglyConvex;
  } else if (s.regime == Regime::LocalShuffle) {
    theorem = Theorem::T4_1;
  } else if (s.regime == Regime::IIDSampling) {
    theorem = Theorem::T7_1;
  } else {
    theorem = Theorem::T3_1;
  }
  try {
    return predict_rate(theorem, params);
  } catch (const InvalidArgument&) {
    return std::nullopt;
  }
}

RunResult run_experiment(const ExperimentConfig& c, const PreparedExperiment& p) {
  RunResult r;
  r.config = c;
  r.constants = p.objective.constants;
  r.target = c.target.value;
  try {
    r.stream = make_stream_spec(c);
    r.schedule = make_schedule(c, p, r.stream);
    RunOptions options;
    if (p.reference) {
      options.reference = p.reference;
      r.f_reference = p.reference->f_star;
      r.reference_is_optimum = true;
    } else {
      options.f_lower_bound = c.f_lower_bound;
      r.f_reference = c.f_lower_bound;
    }
    r.prediction = predicted_rate(c, p, r.stream);
    const BatchStream stream = build_stream(r.stream);
    try {
      r.trace = run(stream, p.objective, p.data, r.schedule, p.w0, options);
    } catch (const NumericAbort& e) {
      r.fault = e.fault();
      r.trace = e.partial();
      r.error = e.what();
    }
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  if (r.target) r.passes_to_target = passes_to_target(r.trace, c.target.metric, *r.target);
  return r;
}

RunResult run_experiment(const ExperimentConfig& c) {
  return run_experiment(c, prepare_experiment(c));
}

std::string summary_json(const RunResult& r) {
  json j;
  j["name"] = r.config.name;
  j["status"] = r.fault ? "numeric-abort" : (r.error.empty() ? "ok" : "error");
  j["error"] = r.error;
  j["fault"] = r.fault ? json{{"epoch", r.fault->epoch}, {"iter", r.fault->iter},
                              {"worker", r.fault->worker}}
                       : json(nullptr);
  j["config"] = json::parse(serialize_config(r.config));
  j["stream"] = {{"regime", to_string(r.stream.regime)},
                 {"n", r.stream.n},
                 {"workers", r.stream.workers},
                 {"batch_size", r.stream.batch_size},
                 {"epochs", r.stream.epochs},
                 {"iterations_per_epoch", r.stream.n ? r.stream.iterations_per_epoch() : 0},
                 {"shuffler", to_string(r.stream.shuffler.algorithm)},
                 {"rounds", r.stream.shuffler.rounds},
                 {"seed", r.stream.seed}};
  json sched = {{"kind", to_string(r.schedule.kind)}};
  switch (r.schedule.kind) {
    case LrKind::StronglyConvexDecay:
      sched["mu"] = r.schedule.mu;
      sched["numerator"] = r.schedule.numerator;
      break;
    case LrKind::ConvexSqrtDecay: sched["lipschitz"] = r.schedule.lipschitz; break;
    case LrKind::NonConvexConstant:
      sched["eta"] = r.schedule.eta;
      sched["scale_with_workers"] = r.schedule.non_convex.scale_with_workers;
      sched["initial_gap"] = r.schedule.non_convex.initial_gap;
      break;
    case LrKind::UserConstant: sched["eta"] = r.schedule.eta; break;
  }
  j["schedule"] = sched;
  j["constants"] = {{"mu", opt_json(r.constants.mu)},
                    {"rho", opt_json(r.constants.rho)},
                    {"kappa", opt_json(r.constants.kappa)},
                    {"lipschitz", opt_json(r.constants.lipschitz)},
                    {"b_sq", opt_json(r.constants.b_sq)},
                    {"g_sq", opt_json(r.constants.g_sq)},
                    {"method", r.constants.method}};
  j["reference"] = {{"f", opt_json(r.f_reference)},
                    {"kind", r.reference_is_optimum ? "optimum" : "lower_bound"}};
  j["records"] = r.trace.records.size();
  j["final"] = r.trace.records.empty() ? json(nullptr) : record_json(r.trace.records.back());
  if (r.ok()) {
    j["averaged"] = {{"objective", r.trace.summary.averaged_objective},
                     {"f_gap", opt_json(r.trace.summary.averaged_f_gap)},
                     {"dist_sq", opt_json(r.trace.summary.averaged_dist_sq)},
                     {"grad_norm_sq", r.trace.summary.averaged_grad_norm_sq}};
  } else {
    j["averaged"] = nullptr;
  }
  j["target"] = {{"metric", to_string(r.config.target.metric)},
                 {"value", opt_json(r.target)},
                 {"passes_to_target", opt_json(r.passes_to_target)}};
  if (r.prediction) {
    json terms = json::array();
    for (const auto& t : r.prediction->terms) {
      terms.push_back({{"name", t.name}, {"value", t.value}, {"s_exponent", t.s_exponent}});
    }
    j["prediction"] = {{"theorem", to_string(r.prediction->theorem)},
                       {"dominant", r.prediction->dominant.name},
                       {"predicted_exponent", r.prediction->predicted_exponent},
                       {"total", r.prediction->total},
                       {"terms", terms}};
  } else {
    j["prediction"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string plot_data(const RunResult& r) {
  std::ostringstream out;
  out << "# effective_passes " << to_string(r.config.target.metric) << "\n";
  for (const auto& rec : r.trace.records) {
    if (auto v = metric_value(rec, r.config.target.metric)) {
      out << num(rec.effective_passes) << ' ' << num(*v) << '\n';
    }
  }
  return out.str();
}

void write_run_outputs(const RunResult& r, const fs::path& dir) {
  write_file_atomic(dir / "trace.csv", trace_csv(r.trace));
  write_file_atomic(dir / "summary.json", summary_json(r));
  write_file_atomic(dir / "plot.dat", plot_data(r));
  const std::string metric = to_string(r.config.target.metric);
  write_file_atomic(dir / "plot.svg",
                    svg_line_chart({metric_series(r.config.name, r.trace, r.config.target.metric)},
                                   r.config.name, "effective passes", metric));
}

// ---------------------------------------------------------------------------

std::string SweepCell::key() const {
  std::ostringstream k;
  k << "M" << workers << "_S" << epochs << "_" << to_string(regime) << "_h" << rounds << "_r"
    << replicate;
  return k.str();
}

std::vector<SweepCell> sweep_cells(const ExperimentConfig& c) {
  const auto& sw = c.sweep;
  auto or_base = [](const auto& axis, auto base) {
    using T = std::decay_t<decltype(base)>;
    return axis.empty() ? std::vector<T>{base} : std::vector<T>(axis.begin(), axis.end());
  };
  const auto workers = or_base(sw.workers, c.stream.workers);
  const auto epochs = or_base(sw.epochs, c.stream.epochs);
  const auto regimes = or_base(sw.regimes, c.stream.regime);
  const auto rounds = or_base(sw.rounds, c.stream.rounds);
  const auto replicates = or_base(sw.replicates, std::uint64_t{0});

  std::vector<SweepCell> cells;
  for (auto r : replicates) {
    for (auto g : regimes) {
      for (auto h : rounds) {
        for (auto S : epochs) {
          for (auto M : workers) {
            SweepCell cell{M, S, g, h, r, c.stream.seed};
            // Seeds depend on the replicate only, so every cell of a replicate
            // sees the same base randomness and new cells never shift old ones.
            if (!sw.replicates.empty()) cell.seed = derive_seed(c.stream.seed, r);
            cells.push_back(cell);
          }
        }
      }
    }
  }
  return cells;
}

ExperimentConfig cell_config(const ExperimentConfig& c, const SweepCell& cell) {
  ExperimentConfig out = c;
  out.name = c.name + "/" + cell.key();
  out.stream.workers = cell.workers;
  out.stream.epochs = cell.epochs;
  out.stream.regime = cell.regime;
  out.stream.rounds = cell.rounds;
  out.stream.seed = cell.seed;
  out.sweep = {};
  out.output_dir = (fs::path(c.output_dir) / "cells" / cell.key()).string();
  return out;
}

SweepResult run_sweep(const ExperimentConfig& c) {
  validate_config(c);
  const auto cells = sweep_cells(c);
  const PreparedExperiment prepared = prepare_experiment(c);

  SweepResult result;
  result.cells.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      result.cells[k].cell = cells[k];
      result.cells[k].run = run_experiment(cell_config(c, cells[k]), prepared);
    }
  };
  const std::size_t threads = std::min(c.sweep.parallelism, cells.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  const TraceMetric metric = c.target.metric;
  using GroupKey = std::tuple<std::size_t, Regime, int, std::uint64_t>;  // S, regime, h, replicate
  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < result.cells.size(); ++k) {
    const auto& cell = result.cells[k].cell;
    groups[{cell.epochs, cell.regime, cell.rounds, cell.replicate}].push_back(k);
  }

  // Targets taken from the smallest-M cell of each group.
  if (!c.target.value && c.target.reference_epoch) {
    for (auto& [key, members] : groups) {
      auto base = *std::min_element(members.begin(), members.end(), [&](auto a, auto b) {
        return result.cells[a].cell.workers < result.cells[b].cell.workers;
      });
      const auto& run = result.cells[base].run;
      const std::size_t T = run.stream.n ? run.stream.iterations_per_epoch() : 0;
      const std::size_t idx = *c.target.reference_epoch * T;
      std::optional<double> target;
      if (run.ok() && idx >= 1 && idx <= run.trace.records.size()) {
        target = metric_value(run.trace.records[idx - 1], metric);
      }
      for (std::size_t k : members) {
        auto& r = result.cells[k].run;
        r.target = target;
        r.passes_to_target = target ? passes_to_target(r.trace, metric, *target) : std::nullopt;
      }
    }
  }

  for (const auto& [key, members] : groups) {
    std::map<std::size_t, MetricsTrace> traces;
    std::optional<double> target;
    for (std::size_t k : members) {
      const auto& r = result.cells[k].run;
      target = r.target;
      if (r.ok()) traces[result.cells[k].cell.workers] = r.trace;
    }
    std::map<std::size_t, SpeedupEntry> entries;
    if (target && traces.count(1)) entries = speedup(traces, *target, metric);
    for (std::size_t k : members) {
      const auto& cell = result.cells[k].cell;
      SpeedupRow row{cell.epochs, cell.regime, cell.rounds, cell.replicate, cell.workers, target, {}};
      if (auto it = entries.find(cell.workers); it != entries.end()) row.entry = it->second;
      result.speedups.push_back(row);
    }
  }

  for (const auto& cr : result.cells) {
    const auto& cell = cr.cell;
    result.regimes.push_back(
        {cell.workers, cell.epochs, cell.rounds, cell.replicate, cell.regime, cr.run.target,
         cr.run.ok() ? cr.run.passes_to_target : std::nullopt});
  }
  std::sort(result.regimes.begin(), result.regimes.end(), [](const auto& a, const auto& b) {
    return std::tie(a.workers, a.epochs, a.rounds, a.replicate, a.regime) <
           std::tie(b.workers, b.epochs, b.rounds, b.replicate, b.regime);
  });
  return result;
}

void write_sweep_outputs(const SweepResult& result, const ExperimentConfig& c, const fs::path& dir) {
  const TraceMetric metric = c.target.metric;
  std::ostringstream cells, plot;
  cells << "key,workers,epochs,regime,rounds,replicate,seed,status,target,passes_to_target,"
           "final_metric,message\n";
  plot << "# effective_passes " << to_string(metric) << "; one block per cell\n";
  std::vector<PlotSeries> series;
  json cell_json = json::array();
  for (const auto& cr : result.cells) {
    const auto& cell = cr.cell;
    const auto& r = cr.run;
    const std::string status = r.fault ? "numeric-abort" : (r.error.empty() ? "ok" : "error");
    std::optional<double> final_metric;
    if (!r.trace.records.empty()) final_metric = metric_value(r.trace.records.back(), metric);
    std::string message = r.error;
    std::replace(message.begin(), message.end(), ',', ';');
    std::replace(message.begin(), message.end(), '\n', ' ');
    cells << cell.key() << ',' << cell.workers << ',' << cell.epochs << ','
          << to_string(cell.regime) << ',' << cell.rounds << ',' << cell.replicate << ','
          << cell.seed << ',' << status << ',' << opt_num(r.target) << ','
          << opt_num(r.passes_to_target) << ',' << opt_num(final_metric) << ',' << message << '\n';
    cell_json.push_back({{"key", cell.key()},
                         {"workers", cell.workers},
                         {"epochs", cell.epochs},
                         {"regime", to_string(cell.regime)},
                         {"rounds", cell.rounds},
                         {"replicate", cell.replicate},
                         {"seed", cell.seed},
                         {"status", status},
                         {"error", r.error},
                         {"target", opt_json(r.target)},
                         {"passes_to_target", opt_json(r.passes_to_target)},
                         {"final_metric", opt_json(final_metric)}});

    plot << "\n\n# cell " << cell.key() << '\n';
    for (const auto& rec : r.trace.records) {
      if (auto v = metric_value(rec, metric)) plot << num(rec.effective_passes) << ' ' << num(*v) << '\n';
    }
    series.push_back(metric_series(cell.key(), r.trace, metric));
    write_file_atomic(dir / "cells" / cell.key() / "trace.csv", trace_csv(r.trace));
  }

  std::ostringstream sp;
  sp << "epochs,regime,rounds,replicate,workers,target,passes_to_target,alpha,speedup\n";
  json sp_json = json::array();
  for (const auto& row : result.speedups) {
    sp << row.epochs << ',' << to_string(row.regime) << ',' << row.rounds << ',' << row.replicate
       << ',' << row.workers << ',' << opt_num(row.target) << ','
       << opt_num(row.entry.passes_to_target) << ',' << opt_num(row.entry.alpha) << ','
       << opt_num(row.entry.speedup) << '\n';
    sp_json.push_back({{"epochs", row.epochs},
                       {"regime", to_string(row.regime)},
                       {"rounds", row.rounds},
                       {"replicate", row.replicate},
                       {"workers", row.workers},
                       {"target", opt_json(row.target)},
                       {"passes_to_target", opt_json(row.entry.passes_to_target)},
                       {"alpha", opt_json(row.entry.alpha)},
                       {"speedup", opt_json(row.entry.speedup)}});
  }

  std::ostringstream rg;
  rg << "workers,epochs,rounds,replicate,regime,target,passes_to_target\n";
  json rg_json = json::array();
  for (const auto& row : result.regimes) {
    rg << row.workers << ',' << row.epochs << ',' << row.rounds << ',' << row.replicate << ','
       << to_string(row.regime) << ',' << opt_num(row.target) << ','
       << opt_num(row.passes_to_target) << '\n';
    rg_json.push_back({{"workers", row.workers},
                       {"epochs", row.epochs},
                       {"rounds", row.rounds},
                       {"replicate", row.replicate},
                       {"regime", to_string(row.regime)},
                       {"target", opt_json(row.target)},
                       {"passes_to_target", opt_json(row.passes_to_target)}});
  }

  json summary = {{"name", c.name},
                  {"config", json::parse(serialize_config(c))},
                  {"cells", cell_json},
                  {"speedup", sp_json},
                  {"regimes", rg_json}};
  write_file_atomic(dir / "cells.csv", cells.str());
  write_file_atomic(dir / "speedup.csv", sp.str());
  write_file_atomic(dir / "regimes.csv", rg.str());
  write_file_atomic(dir / "plot.dat", plot.str());
  write_file_atomic(dir / "plot.svg", svg_line_chart(series, c.name, "effective passes",
                                                     to_string(metric)));
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace dsgd
