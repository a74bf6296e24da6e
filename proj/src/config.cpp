#include "tag/config.hpp"

#include <cmath>
#include <set>

#include "tag/artifact.hpp"
#include "tag/errors.hpp"

namespace tag {

namespace {

using nlohmann::json;

// Reads typed fields out of one JSON object and remembers which keys were used,
// so leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(where() + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(field(key) + " has the wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, field(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ValidationError("unknown key " + field(k.c_str()));
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const char* trunk_name(TrunkKind k) {
  switch (k) {
    case TrunkKind::point: return "point";
    case TrunkKind::linear: return "linear";
    case TrunkKind::tanh_mlp: return "tanh_mlp";
  }
  return "?";
}

TrunkKind trunk_from(const std::string& s) {
  if (s == "linear") return TrunkKind::linear;
  if (s == "tanh_mlp") return TrunkKind::tanh_mlp;
  throw ValidationError("taskset.trunk must be linear|tanh_mlp, got '" + s + "'");
}

std::vector<std::vector<TaskId>> halves(std::size_t n) {
  std::vector<std::vector<TaskId>> c(2);
  for (std::size_t t = 0; t < n; ++t) c[t < (n + 1) / 2 ? 0 : 1].push_back(static_cast<TaskId>(t));
  if (c[1].empty()) c.pop_back();
  return c;
}

std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

void RunConfig::validate() const {
  const auto& d = bench.data;
  const auto& t = bench.train;
  if (d.n_tasks < 1 || d.n_tasks > kMaxSelectionTasks) throw ValidationError("taskset.n must be in [1, 20]");
  try {
    validate_partition(d.n_tasks, d.clusters);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("taskset.") + e.what());
  }
  if (d.feature_dim < d.clusters.size()) throw ValidationError("taskset.feature_dim must be >= number of clusters");
  if (d.width < 1) throw ValidationError("taskset.width must be >= 1");
  if (d.train_samples < 1) throw ValidationError("taskset.train_samples must be >= 1");
  if (d.validation_samples < 1) throw ValidationError("taskset.validation_samples must be >= 1");
  if (d.test_samples < 1) throw ValidationError("taskset.test_samples must be >= 1");
  if (!(d.noise >= 0.0) || !std::isfinite(d.noise)) throw ValidationError("taskset.noise must be finite and >= 0");
  if (!(t.eta > 0.0) || !std::isfinite(t.eta)) throw ValidationError("trainer.eta must be finite and > 0");
  if (t.steps < 1) throw ValidationError("trainer.steps must be >= 1");
  if (t.batch_size < 1) throw ValidationError("trainer.batch_size must be >= 1");
  if (!(t.loss_ceiling > 0.0)) throw ValidationError("trainer.loss_ceiling must be > 0");
  const auto s = bench.schedule();
  if (s.mode == ProbeSchedule::Mode::every_k_steps && s.k < 1) throw ValidationError("schedule.k must be >= 1");
  if (s.mode == ProbeSchedule::Mode::window &&
      !(s.fraction_start >= 0.0 && s.fraction_start < s.fraction_end && s.fraction_end <= 1.0))
    throw ValidationError("schedule.window must satisfy 0 <= start < end <= 1");
  if (bench.budget < 1) throw ValidationError("selection.budget must be >= 1");
  if (bench.budget > d.n_tasks) throw ValidationError("selection.budget must not exceed taskset.n");
  if (bench.parameter_cap) {
    const Architecture arch{d.trunk, d.feature_dim, d.width};
    if (arch.parameter_count(1) >= *bench.parameter_cap)
      throw ValidationError("selection.latency_param_cap admits no network (one head needs " +
                            std::to_string(arch.parameter_count(1)) + " parameters)");
  }
  if (bench.rg_trials < 1) throw ValidationError("selection.rg_trials must be >= 1");
  if (output_dir.empty()) throw ValidationError("output_dir must not be empty");
}

nlohmann::json RunConfig::to_json() const {
  const auto& d = bench.data;
  const auto& t = bench.train;
  const auto s = bench.schedule();
  json schedule{{"batch_source", s.batch_source == BatchSource::train ? "train" : "validation"}};
  if (s.mode == ProbeSchedule::Mode::every_k_steps) {
    schedule["mode"] = "every_k_steps";
    schedule["k"] = s.k;
  } else {
    schedule["mode"] = "window";
    schedule["start"] = s.fraction_start;
    schedule["end"] = s.fraction_end;
  }
  json selection{{"budget", bench.budget}, {"mode", to_string(bench.mode)}, {"rg_trials", bench.rg_trials}};
  selection["latency_param_cap"] = bench.parameter_cap ? json(*bench.parameter_cap) : json();
  return {{"taskset",
           {{"kind", "planted"},
            {"n", d.n_tasks},
            {"clusters", d.clusters},
            {"noise", d.noise},
            {"feature_dim", d.feature_dim},
            {"trunk", trunk_name(d.trunk)},
            {"width", d.width},
            {"train_samples", d.train_samples},
            {"validation_samples", d.validation_samples},
            {"test_samples", d.test_samples}}},
          {"trainer", {{"eta", t.eta}, {"steps", t.steps}, {"batch_size", t.batch_size}, {"loss_ceiling", t.loss_ceiling}}},
          {"schedule", schedule},
          {"selection", selection},
          {"seeds", {{"data", d.seed}, {"train", t.seed}, {"rg", bench.rg_seed}}},
          {"output_dir", output_dir}};
}

std::string RunConfig::hash() const { return sha256_hex(canonical()); }

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  auto& d = c.bench.data;
  auto& t = c.bench.train;
  Section root(j, "");

  {
    auto s = root.child("taskset");
    std::string kind = "planted";
    s.read("kind", kind);
    if (kind != "planted") throw ValidationError("taskset.kind must be 'planted', got '" + kind + "'");
    s.read("n", d.n_tasks);
    s.read("clusters", d.clusters);
    if (!s.has("clusters")) d.clusters = halves(d.n_tasks);
    s.read("noise", d.noise);
    s.read("feature_dim", d.feature_dim);
    std::string trunk = trunk_name(d.trunk);
    s.read("trunk", trunk);
    d.trunk = trunk_from(trunk);
    s.read("width", d.width);
    s.read("train_samples", d.train_samples);
    s.read("validation_samples", d.validation_samples);
    s.read("test_samples", d.test_samples);
    s.finish();
  }
  {
    auto s = root.child("trainer");
    s.read("eta", t.eta);
    s.read("steps", t.steps);
    s.read("batch_size", t.batch_size);
    s.read("loss_ceiling", t.loss_ceiling);
    s.finish();
  }
  {
    auto s = root.child("schedule");
    std::string mode = "every_k_steps", source = "train";
    ProbeSchedule p;
    s.read("mode", mode);
    s.read("k", p.k);
    s.read("start", p.fraction_start);
    s.read("end", p.fraction_end);
    s.read("batch_source", source);
    if (mode == "every_k_steps") {
      p.mode = ProbeSchedule::Mode::every_k_steps;
      if (s.has("start") || s.has("end")) throw ValidationError("schedule.start/end only apply to mode 'window'");
    } else if (mode == "window") {
      p.mode = ProbeSchedule::Mode::window;
      if (s.has("k")) throw ValidationError("schedule.k only applies to mode 'every_k_steps'");
    } else {
      throw ValidationError("schedule.mode must be every_k_steps|window, got '" + mode + "'");
    }
    if (source == "train") p.batch_source = BatchSource::train;
    else if (source == "validation") p.batch_source = BatchSource::validation;
    else throw ValidationError("schedule.batch_source must be train|validation, got '" + source + "'");
    s.finish();
    t.schedule = p;
  }
  {
    auto s = root.child("selection");
    s.read("budget", c.bench.budget);
    std::string mode = "train";
    s.read("mode", mode);
    try {
      c.bench.mode = diagonal_mode_from_string(mode);
    } catch (const ValidationError&) {
      throw ValidationError("selection.mode must be train|val, got '" + mode + "'");
    }
    nlohmann::json cap;
    s.read("latency_param_cap", cap);
    if (!cap.is_null()) {
      if (!cap.is_number_unsigned()) throw ValidationError("selection.latency_param_cap must be a positive integer or null");
      c.bench.parameter_cap = cap.get<std::size_t>();
    }
    s.read("rg_trials", c.bench.rg_trials);
    s.finish();
  }
  {
    auto s = root.child("seeds");
    s.read("data", d.seed);
    s.read("train", t.seed);
    s.read("rg", c.bench.rg_seed);
    s.finish();
  }
  root.read("output_dir", c.output_dir);
  root.finish();
  c.validate();
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ValidationError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                          ": " + e.what());
  }
  return config_from_json(j);
}

RunConfig parse_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path.string());
  return parse_config_text(read_file(path));
}

}  // namespace tag
