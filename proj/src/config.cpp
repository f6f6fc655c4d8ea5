#include "dsgd/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dsgd {

using nlohmann::json;

namespace {

// Best-effort line of a key path in the source text: finds each key in turn,
// searching forward from the previous one. Parts that are not keys (array
// indices) are skipped.
std::optional<std::size_t> line_of(const std::string& text, const std::vector<std::string>& path) {
  std::size_t pos = 0;
  bool found = false;
  for (const auto& key : path) {
    const std::size_t hit = text.find("\"" + key + "\"", pos);
    if (hit == std::string::npos) continue;
    pos = hit + key.size() + 2;
    found = true;
  }
  if (!found) return std::nullopt;
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& what) const {
    std::string where;
    for (const auto& p : path) where += "/" + p;
    if (where.empty()) where = "/";
    std::ostringstream msg;
    if (auto line = line_of(text_, path)) msg << "line " << *line << ": ";
    msg << where << ": " << what;
    throw ConfigError(msg.str());
  }

  void check_keys(const json& obj, const std::vector<std::string>& path,
                  const std::set<std::string>& allowed) const {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
      if (!allowed.count(key)) {
        auto p = path;
        p.push_back(key);
        fail(p, "unknown key");
      }
    }
  }

  template <class T>
  void get(const json& obj, std::vector<std::string> path, const std::string& key, T& out) const {
    if (!obj.contains(key)) return;
    path.push_back(key);
    const json& v = obj.at(key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) fail(path, "expected a non-negative integer");
        out = v.get<T>();
      } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) fail(path, "expected an integer");
        out = v.get<int>();
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(path, "expected a number");
        out = v.get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(path, "expected true or false");
        out = v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(path, "expected a string");
        out = v.get<std::string>();
      } else {
        static_assert(sizeof(T) == 0, "unsupported field type");
      }
    } catch (const json::exception& e) {
      fail(path, e.what());
    }
  }

  template <class T>
  void get(const json& obj, std::vector<std::string> path, const std::string& key,
           std::optional<T>& out) const {
    if (!obj.contains(key)) return;
    if (obj.at(key).is_null()) {
      out.reset();
      return;
    }
    T value{};
    get(obj, path, key, value);
    out = value;
  }

  template <class T>
  void get_list(const json& obj, std::vector<std::string> path, const std::string& key,
                std::vector<T>& out) const {
    if (!obj.contains(key)) return;
    path.push_back(key);
    const json& v = obj.at(key);
    if (!v.is_array()) fail(path, "expected an array");
    out.clear();
    for (std::size_t k = 0; k < v.size(); ++k) {
      const std::string index = std::to_string(k);
      json wrapper = {{index, v[k]}};
      T item{};
      get(wrapper, path, index, item);
      out.push_back(item);
    }
  }

  // Reads a string and maps it through `parse`, reporting failures at the key.
  template <class T, class Parse>
  void get_enum(const json& obj, std::vector<std::string> path, const std::string& key, T& out,
                Parse parse) const {
    std::string name;
    if (!obj.contains(key)) return;
    get(obj, path, key, name);
    try {
      out = parse(name);
    } catch (const InvalidArgument& e) {
      path.push_back(key);
      fail(path, e.what());
    }
  }

 private:
  const std::string& text_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // Byte offsets are 1-based and point just past the offending character.
    const std::size_t offset = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(
                                     std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
    const std::size_t last_nl = text.rfind('\n', offset == 0 ? 0 : offset - 1);
    const std::size_t column = last_nl == std::string::npos ? offset + 1 : offset - last_nl;
    std::ostringstream msg;
    msg << "line " << line << ", column " << column << ": malformed JSON";
    throw ConfigError(msg.str());
  }

  Reader r(text);
  ExperimentConfig c;
  r.check_keys(root, {}, {"name", "objective", "data", "stream", "schedule", "constants", "target",
                          "sweep", "init_seed", "f_lower_bound", "output_dir"});
  r.get(root, {}, "name", c.name);
  r.get(root, {}, "init_seed", c.init_seed);
  r.get(root, {}, "f_lower_bound", c.f_lower_bound);
  c.output_dir = "runs/" + c.name;
  r.get(root, {}, "output_dir", c.output_dir);

  if (root.contains("objective")) {
    const json& o = root["objective"];
    const std::vector<std::string> p{"objective"};
    r.check_keys(o, p, {"family", "mu", "kappa", "lambda", "hidden", "activation", "weight_decay"});
    r.get(o, p, "family", c.objective.family);
    r.get(o, p, "mu", c.objective.mu);
    r.get(o, p, "kappa", c.objective.kappa);
    r.get(o, p, "lambda", c.objective.lambda);
    r.get_list(o, p, "hidden", c.objective.hidden);
    r.get(o, p, "activation", c.objective.activation);
    r.get(o, p, "weight_decay", c.objective.weight_decay);
  }
  if (root.contains("data")) {
    const json& o = root["data"];
    const std::vector<std::string> p{"data"};
    r.check_keys(o, p, {"generator", "n", "dim", "seed", "order", "spread", "scale", "label_noise",
                        "separation", "classes"});
    r.get(o, p, "generator", c.data.generator);
    r.get(o, p, "n", c.data.n);
    r.get(o, p, "dim", c.data.dim);
    r.get(o, p, "seed", c.data.seed);
    r.get_enum(o, p, "order", c.data.order, parse_data_order);
    r.get(o, p, "spread", c.data.spread);
    r.get(o, p, "scale", c.data.scale);
    r.get(o, p, "label_noise", c.data.label_noise);
    r.get(o, p, "separation", c.data.separation);
    r.get(o, p, "classes", c.data.classes);
  }
  if (root.contains("stream")) {
    const json& o = root["stream"];
    const std::vector<std::string> p{"stream"};
    r.check_keys(o, p, {"regime", "workers", "batch_size", "epochs", "shuffler", "rounds", "seed"});
    r.get_enum(o, p, "regime", c.stream.regime, parse_regime);
    r.get(o, p, "workers", c.stream.workers);
    r.get(o, p, "batch_size", c.stream.batch_size);
    r.get(o, p, "epochs", c.stream.epochs);
    r.get_enum(o, p, "shuffler", c.stream.shuffler, parse_shuffle_algorithm);
    r.get(o, p, "rounds", c.stream.rounds);
    r.get(o, p, "seed", c.stream.seed);
  }
  if (root.contains("schedule")) {
    const json& o = root["schedule"];
    const std::vector<std::string> p{"schedule"};
    r.check_keys(o, p, {"kind", "numerator", "mu", "lipschitz", "eta", "scale_with_workers"});
    r.get_enum(o, p, "kind", c.schedule.kind, parse_lr_kind);
    r.get(o, p, "numerator", c.schedule.numerator);
    r.get(o, p, "mu", c.schedule.mu);
    r.get(o, p, "lipschitz", c.schedule.lipschitz);
    r.get(o, p, "eta", c.schedule.eta);
    r.get(o, p, "scale_with_workers", c.schedule.scale_with_workers);
  }
  if (root.contains("constants")) {
    const json& o = root["constants"];
    const std::vector<std::string> p{"constants"};
    r.check_keys(o, p, {"samples", "radius", "seed"});
    r.get(o, p, "samples", c.constants.samples);
    r.get(o, p, "radius", c.constants.radius);
    r.get(o, p, "seed", c.constants.seed);
  }
  if (root.contains("target")) {
    const json& o = root["target"];
    const std::vector<std::string> p{"target"};
    r.check_keys(o, p, {"metric", "value", "reference_epoch"});
    r.get_enum(o, p, "metric", c.target.metric, parse_trace_metric);
    r.get(o, p, "value", c.target.value);
    r.get(o, p, "reference_epoch", c.target.reference_epoch);
  }
  if (root.contains("sweep")) {
    const json& o = root["sweep"];
    const std::vector<std::string> p{"sweep"};
    r.check_keys(o, p, {"workers", "epochs", "regimes", "rounds", "replicates", "parallelism"});
    r.get_list(o, p, "workers", c.sweep.workers);
    r.get_list(o, p, "epochs", c.sweep.epochs);
    std::vector<std::string> regimes;
    r.get_list(o, p, "regimes", regimes);
    c.sweep.regimes.clear();
    for (const auto& name : regimes) {
      try {
        c.sweep.regimes.push_back(parse_regime(name));
      } catch (const InvalidArgument& e) {
        r.fail({"sweep", "regimes"}, e.what());
      }
    }
    r.get_list(o, p, "rounds", c.sweep.rounds);
    r.get_list(o, p, "replicates", c.sweep.replicates);
    r.get(o, p, "parallelism", c.sweep.parallelism);
  }

  try {
    validate_config(c);
  } catch (const ConfigError& e) {
    // Re-anchor semantic errors to a source line when the message names a path.
    const std::string what = e.what();
    if (what.rfind('/', 0) == 0) {
      const std::string path = what.substr(0, what.find(':'));
      std::vector<std::string> parts;
      std::stringstream ss(path.substr(1));
      for (std::string part; std::getline(ss, part, '/');) parts.push_back(part);
      if (auto line = line_of(text, parts)) {
        throw ConfigError("line " + std::to_string(*line) + ": " + what);
      }
    }
    throw;
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string serialize_config(const ExperimentConfig& c) {
  json root;
  root["name"] = c.name;
  root["objective"] = {{"family", c.objective.family},
                       {"mu", c.objective.mu},
                       {"kappa", c.objective.kappa},
                       {"lambda", optional_json(c.objective.lambda)},
                       {"hidden", c.objective.hidden},
                       {"activation", c.objective.activation},
                       {"weight_decay", c.objective.weight_decay}};
  root["data"] = {{"generator", c.data.generator},   {"n", c.data.n},
                  {"dim", c.data.dim},               {"seed", c.data.seed},
                  {"order", to_string(c.data.order)}, {"spread", c.data.spread},
                  {"scale", c.data.scale},           {"label_noise", c.data.label_noise},
                  {"separation", c.data.separation}, {"classes", c.data.classes}};
  root["stream"] = {{"regime", to_string(c.stream.regime)},
                    {"workers", c.stream.workers},
                    {"batch_size", c.stream.batch_size},
                    {"epochs", c.stream.epochs},
                    {"shuffler", to_string(c.stream.shuffler)},
                    {"rounds", c.stream.rounds},
                    {"seed", c.stream.seed}};
  root["schedule"] = {{"kind", to_string(c.schedule.kind)},
                      {"numerator", c.schedule.numerator},
                      {"mu", optional_json(c.schedule.mu)},
                      {"lipschitz", optional_json(c.schedule.lipschitz)},
                      {"eta", optional_json(c.schedule.eta)},
                      {"scale_with_workers", c.schedule.scale_with_workers}};
  root["constants"] = {{"samples", c.constants.samples},
                       {"radius", c.constants.radius},
                       {"seed", c.constants.seed}};
  root["target"] = {{"metric", to_string(c.target.metric)},
                    {"value", optional_json(c.target.value)},
                    {"reference_epoch", c.target.reference_epoch ? json(*c.target.reference_epoch)
                                                                 : json(nullptr)}};
  std::vector<std::string> regimes;
  for (Regime g : c.sweep.regimes) regimes.push_back(to_string(g));
  root["sweep"] = {{"workers", c.sweep.workers},       {"epochs", c.sweep.epochs},
                   {"regimes", regimes},               {"rounds", c.sweep.rounds},
                   {"replicates", c.sweep.replicates}, {"parallelism", c.sweep.parallelism}};
  root["init_seed"] = c.init_seed;
  root["f_lower_bound"] = c.f_lower_bound;
  root["output_dir"] = c.output_dir;
  return root.dump(2) + "\n";
}

void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
  };
  if (c.name.empty()) fail("/name", "must not be empty");
  if (c.output_dir.empty()) fail("/output_dir", "must not be empty");

  const auto& o = c.objective;
  if (o.family != "quadratic" && o.family != "logistic" && o.family != "mlp") {
    fail("/objective/family", "expected quadratic, logistic or mlp, got '" + o.family + "'");
  }
  if (o.family == "quadratic" && (!(o.mu > 0.0) || !(o.kappa >= 1.0))) {
    fail("/objective/mu", "quadratic needs mu > 0 and kappa >= 1");
  }
  if (o.lambda && !(*o.lambda >= 0.0)) fail("/objective/lambda", "must be >= 0");
  if (o.family == "mlp") {
    if (o.activation != "tanh" && o.activation != "sigmoid") {
      fail("/objective/activation", "expected tanh or sigmoid");
    }
    for (std::size_t h : o.hidden) {
      if (h == 0) fail("/objective/hidden", "layer sizes must be positive");
    }
    if (!(o.weight_decay >= 0.0)) fail("/objective/weight_decay", "must be >= 0");
  }

  const auto& d = c.data;
  const std::string expected = o.family == "quadratic" ? "quadratic-centers"
                               : o.family == "logistic" ? "synthetic-logistic"
                                                        : "synthetic-gaussian-blobs";
  if (d.generator != expected) {
    fail("/data/generator", "family " + o.family + " needs generator " + expected + ", got '" +
                                d.generator + "'");
  }
  if (d.n == 0) fail("/data/n", "must be positive");
  if (d.dim == 0) fail("/data/dim", "must be positive");
  if (d.generator == "synthetic-gaussian-blobs" && d.classes < 2) {
    fail("/data/classes", "need at least two classes");
  }
  if (!(d.label_noise >= 0.0 && d.label_noise <= 1.0)) fail("/data/label_noise", "must lie in [0, 1]");

  const auto& s = c.stream;
  if (s.workers == 0) fail("/stream/workers", "must be positive");
  if (s.batch_size == 0) fail("/stream/batch_size", "must be positive");
  if (s.epochs == 0) fail("/stream/epochs", "must be positive");
  if (s.rounds < 0) fail("/stream/rounds", "must be >= 0");

  std::vector<std::size_t> all_workers = c.sweep.workers;
  if (all_workers.empty()) all_workers.push_back(s.workers);
  for (std::size_t M : all_workers) {
    if (M == 0) fail("/sweep/workers", "must be positive");
    if (d.n % (M * s.batch_size) != 0) {
      std::ostringstream msg;
      msg << "n = " << d.n << " is not divisible by M*b = " << M << "*" << s.batch_size << " = "
          << M * s.batch_size;
      fail(c.sweep.workers.empty() ? "/stream/workers" : "/sweep/workers", msg.str());
    }
  }
  for (std::size_t S : c.sweep.epochs) {
    if (S == 0) fail("/sweep/epochs", "must be positive");
  }
  for (int h : c.sweep.rounds) {
    if (h < 0) fail("/sweep/rounds", "must be >= 0");
  }
  if (c.sweep.parallelism == 0) fail("/sweep/parallelism", "must be positive");

  const auto& k = c.schedule;
  switch (k.kind) {
    case LrKind::StronglyConvexDecay:
      if (o.family == "mlp" && !k.mu) fail("/schedule/mu", "mlp has no mu; set schedule.mu");
      if (k.mu && !(*k.mu > 0.0)) fail("/schedule/mu", "must be positive");
      if (!(k.numerator > 0.0)) fail("/schedule/numerator", "must be positive");
      break;
    case LrKind::ConvexSqrtDecay:
      if (k.lipschitz && !(*k.lipschitz > 0.0)) fail("/schedule/lipschitz", "must be positive");
      break;
    case LrKind::NonConvexConstant:
      break;
    case LrKind::UserConstant:
      if (!k.eta || !(*k.eta > 0.0)) fail("/schedule/eta", "constant schedule needs eta > 0");
      break;
  }

  if (c.constants.samples < 0) fail("/constants/samples", "must be >= 0");
  if (!(c.constants.radius > 0.0)) fail("/constants/radius", "must be positive");
  if (c.target.value && !(*c.target.value > 0.0)) fail("/target/value", "must be positive");
  if (c.target.reference_epoch && *c.target.reference_epoch == 0) {
    fail("/target/reference_epoch", "epochs are 1-based");
  }
}

}  // namespace dsgd
