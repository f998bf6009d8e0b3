#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sfm/data_harness.hpp"
#include "sfm/errors.hpp"
#include "sfm/model_gmm.hpp"
#include "sfm/model_hmm.hpp"
#include "sfm/posterior_sampler.hpp"
#include "sfm/predictor.hpp"
#include "sfm/trainer.hpp"

namespace sfm {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every accepted key, its default and a one-line description.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"backend", "gmm", "generative model family: gmm | hmm"},
      {"mode", "supervised", "supervised | semi (semi also uses unlabeled rows)"},
      {"data.path", "", "training data file (train, benchmark) or data to score (predict, bound-report)"},
      {"data.test_path", "", "optional held-out file scored after train"},
      {"data.unlabeled_path", "", "optional extra unlabeled rows for semi mode"},
      {"data.delimiter", ",", "cell delimiter; 'tab' and 'space' are accepted"},
      {"data.label_column", "-1", "label column of vector files; negative counts from the end"},
      {"data.header", "auto", "vector files: auto | true | false"},
      {"data.alphabet", "ACDEFGHIKLMNPQRSTVWYBX", "sequence files: symbol i maps to token i"},
      {"data.standardize", "true", "scale vector features to mean 0, variance 1 on training rows"},
      {"task.positive_class", "", "class trained as +1 against all others; empty picks the first sorted name"},
      {"gmm.K", "4", "mixture components per class"},
      {"gmm.variance_floor_scale", "1e-4", "variance floor as a fraction of the data variance"},
      {"gmm.posterior_floor", "1e-12", "floor on responsibilities"},
      {"hmm.M", "10", "hidden states per class"},
      {"hmm.prob_floor", "1e-8", "floor on re-estimated probabilities"},
      {"hmm.min_length", "2", "shortest accepted sequence"},
      {"trainer.gamma_u", "5", "initial step size of the weight-mean update"},
      {"trainer.gamma_c", "0.5", "step size of the C update"},
      {"trainer.max_outer_iters", "30", "outer iterations"},
      {"trainer.restarts", "1", "independent restarts; the lowest final J wins"},
      {"trainer.init_range", "20", "half-width of the random start box"},
      {"trainer.u0_fraction", "0.5", "share of labeled data used to fit the prior mean"},
      {"trainer.u0_restarts", "10", "starts for the prior-mean fit"},
      {"trainer.u0_iters", "100", "iterations per prior-mean start"},
      {"trainer.delta", "0.05", "bound confidence parameter"},
      {"trainer.C_init", "1", "initial trade-off constant"},
      {"trainer.c_update", "gradient", "gradient | cross_validation | fixed"},
      {"trainer.C_min", "1e-3", "lower clamp on C under gradient updates"},
      {"trainer.convergence_tol", "1e-5", "stop when |dJ| stays below this"},
      {"trainer.convergence_patience", "3", "consecutive calm iterations needed to stop"},
      {"trainer.seed", "1", "seed of every random stream"},
      {"trainer.warmup_iters", "5", "untilted EM passes before training"},
      {"trainer.max_halvings", "20", "step halvings per backtracking search"},
      {"trainer.max_degraded_fraction", "0.2", "abort when more examples than this exhaust their attempts"},
      {"trainer.divergence_norm", "1e6", "abort when |u| exceeds this"},
      {"trainer.cv_grid", "0.015625,0.03125,0.0625,0.125,0.25,0.5,1,2,4,8,16,32,64",
       "candidate C values for cross_validation"},
      {"trainer.cv_folds", "10", "folds for cross_validation"},
      {"sampler.weight_scale", "per_example", "per_example | paper"},
      {"sampler.n_draws", "5", "accepted hidden draws per example"},
      {"sampler.max_attempts", "0", "proposals per example; 0 means 200 x n_draws"},
      {"sampler.exact_pairing", "false", "pair draws exactly in e_S instead of per draw"},
      {"predict.n", "5", "hidden draws per majority vote"},
      {"predict.normalized", "true", "score with the unit-normalized feature"},
      {"predict.seed", "7", "seed of the prediction streams"},
      {"benchmark.partitions", "20", "random partitions per task"},
      {"benchmark.unlabeled_fraction", "0.25", "share of each test half used as unlabeled data in semi mode"},
      {"benchmark.seed", "2024", "seed of the partitions"},
      {"benchmark.learning_curve", "", "comma-separated labeled-set sizes; empty runs the plain benchmark"},
      {"output.dir", "out", "directory for model, telemetry and results"},
      {"model.path", "", "model file; empty means <output.dir>/model.sfm"},
      {"report.deltas", "0.5,0.05,0.005", "delta values for the bound report sweep"},
  };
  return keys;
}

/// Flat key=value settings. Lines starting with '#' and blank lines are
/// ignored; a `[section]` line prefixes the keys that follow with `section.`.
class Config {
 public:
  Config() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
  }

  static Config from_stream(std::istream& in, const std::string& origin = "config") {
    Config c;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto t = detail::trim(line);
      if (t.empty() || t.front() == '#') continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
        section = std::string(detail::trim(t.substr(1, t.size() - 2)));
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
      }
      std::string key(detail::trim(t.substr(0, eq)));
      if (!section.empty()) key = section + "." + key;
      try {
        c.set(key, std::string(detail::trim(t.substr(eq + 1))));
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    return c;
  }

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return from_stream(in, path);
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
  }

  /// Applies a `key=value` override.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(std::string(detail::trim(std::string_view(assignment).substr(0, eq))),
        std::string(detail::trim(std::string_view(assignment).substr(eq + 1))));
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const auto v = detail::parse_double(str(key));
    if (!v) throw ConfigError(key + ": expected a finite number, got '" + str(key) + "'");
    return *v;
  }

  std::uint64_t integer(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError(key + ": expected a nonnegative integer, got '" + s + "'");
    }
    return v;
  }

  long long signed_integer(const std::string& key) const {
    const auto& s = str(key);
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError(key + ": expected an integer, got '" + s + "'");
    }
    return v;
  }

  bool boolean(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + s + "'");
  }

  std::vector<double> real_list(const std::string& key) const {
    std::vector<double> out;
    const auto& s = str(key);
    if (detail::trim(s).empty()) return out;
    for (auto cell : detail::split(s, ',')) {
      const auto v = detail::parse_double(cell);
      if (!v) throw ConfigError(key + ": '" + std::string(cell) + "' is not a number");
      out.push_back(*v);
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Writes every key with its current value and description, grouped by
/// section, in a form that `Config::from_stream` reads back.
inline void print_config(std::ostream& out, const Config& c = Config{}) {
  for (const auto& k : config_keys()) {
    out << "# " << k.help << "\n" << k.name << " = " << c.str(k.name) << "\n";
  }
}

enum class ModelFamily { gmm, hmm };
enum class Mode { supervised, semi };

/// Typed view of a Config, checked once.
struct RunConfig {
  ModelFamily family = ModelFamily::gmm;
  Mode mode = Mode::supervised;
  std::string data_path;
  std::string test_path;
  std::string unlabeled_path;
  VectorFormat vector_format;
  SequenceFormat sequence_format;
  bool standardize = true;
  std::string positive_class;
  gmm::GmmConfig gmm;
  hmm::HmmConfig hmm;
  TrainConfig train;
  PredictConfig predict;
  std::uint64_t predict_seed = 7;
  std::size_t partitions = 20;
  double unlabeled_fraction = 0.25;
  std::uint64_t benchmark_seed = 2024;
  std::vector<std::size_t> learning_curve;
  std::string output_dir;
  std::string model_path;
  std::vector<double> report_deltas;
};

namespace detail {

inline char parse_delimiter(const std::string& s) {
  if (s == "tab" || s == "\\t") return '\t';
  if (s == "space") return ' ';
  if (s.size() != 1) throw ConfigError("data.delimiter: expected one character, 'tab' or 'space', got '" + s + "'");
  return s[0];
}

template <class E>
E parse_enum(const Config& c, const std::string& key, std::initializer_list<std::pair<const char*, E>> options) {
  const auto& s = c.str(key);
  std::string names;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    names += names.empty() ? name : std::string(" | ") + name;
  }
  throw ConfigError(key + ": expected " + names + ", got '" + s + "'");
}

}  // namespace detail

inline RunConfig to_run_config(const Config& c) {
  RunConfig r;
  r.family = detail::parse_enum<ModelFamily>(c, "backend", {{"gmm", ModelFamily::gmm}, {"hmm", ModelFamily::hmm}});
  r.mode = detail::parse_enum<Mode>(c, "mode", {{"supervised", Mode::supervised}, {"semi", Mode::semi}});
  r.data_path = c.str("data.path");
  r.test_path = c.str("data.test_path");
  r.unlabeled_path = c.str("data.unlabeled_path");
  const char delim = detail::parse_delimiter(c.str("data.delimiter"));
  r.vector_format.delimiter = delim;
  r.vector_format.label_column = static_cast<int>(c.signed_integer("data.label_column"));
  r.vector_format.header = detail::parse_enum<HeaderMode>(
      c, "data.header", {{"auto", HeaderMode::automatic}, {"true", HeaderMode::present}, {"false", HeaderMode::absent}});
  r.sequence_format.delimiter = delim;
  r.sequence_format.alphabet = c.str("data.alphabet");
  r.sequence_format.min_length = c.integer("hmm.min_length");
  r.standardize = c.boolean("data.standardize");
  r.positive_class = c.str("task.positive_class");

  r.gmm.K = c.integer("gmm.K");
  r.gmm.variance_floor_scale = c.real("gmm.variance_floor_scale");
  r.gmm.posterior_floor = c.real("gmm.posterior_floor");
  r.hmm.M = c.integer("hmm.M");
  r.hmm.K_out = r.sequence_format.alphabet.size();
  r.hmm.prob_floor = c.real("hmm.prob_floor");
  r.hmm.min_length = c.integer("hmm.min_length");

  auto& t = r.train;
  t.gamma_u = c.real("trainer.gamma_u");
  t.gamma_c = c.real("trainer.gamma_c");
  t.max_outer_iters = c.integer("trainer.max_outer_iters");
  t.restarts = c.integer("trainer.restarts");
  t.init_range = c.real("trainer.init_range");
  t.u0_fraction = c.real("trainer.u0_fraction");
  t.u0_restarts = c.integer("trainer.u0_restarts");
  t.u0_iters = c.integer("trainer.u0_iters");
  t.delta = c.real("trainer.delta");
  t.C_init = c.real("trainer.C_init");
  t.c_update = detail::parse_enum<CUpdate>(c, "trainer.c_update",
                                           {{"gradient", CUpdate::gradient},
                                            {"cross_validation", CUpdate::cross_validation},
                                            {"fixed", CUpdate::fixed}});
  t.C_min = c.real("trainer.C_min");
  t.convergence_tol = c.real("trainer.convergence_tol");
  t.convergence_patience = c.integer("trainer.convergence_patience");
  t.seed = c.integer("trainer.seed");
  t.warmup_iters = c.integer("trainer.warmup_iters");
  t.max_halvings = c.integer("trainer.max_halvings");
  t.max_degraded_fraction = c.real("trainer.max_degraded_fraction");
  t.divergence_norm = c.real("trainer.divergence_norm");
  t.cv_grid = c.real_list("trainer.cv_grid");
  t.cv_folds = c.integer("trainer.cv_folds");
  t.weight_scale = detail::parse_enum<WeightScale>(
      c, "sampler.weight_scale", {{"per_example", WeightScale::per_example}, {"paper", WeightScale::paper}});
  t.n_draws = c.integer("sampler.n_draws");
  t.max_attempts = c.integer("sampler.max_attempts");
  t.exact_pairing = c.boolean("sampler.exact_pairing");

  r.predict.n = c.integer("predict.n");
  r.predict.normalized = c.boolean("predict.normalized");
  r.predict_seed = c.integer("predict.seed");
  r.partitions = c.integer("benchmark.partitions");
  r.unlabeled_fraction = c.real("benchmark.unlabeled_fraction");
  r.benchmark_seed = c.integer("benchmark.seed");
  for (double v : c.real_list("benchmark.learning_curve")) {
    if (!(v >= 2.0) || v != std::floor(v)) {
      throw ConfigError("benchmark.learning_curve: sizes must be integers of at least 2");
    }
    r.learning_curve.push_back(static_cast<std::size_t>(v));
  }
  r.output_dir = c.str("output.dir");
  r.model_path = c.str("model.path");
  if (r.model_path.empty()) r.model_path = r.output_dir + "/model.sfm";
  r.report_deltas = c.real_list("report.deltas");

  if (r.gmm.K == 0) throw ConfigError("gmm.K: must be at least 1");
  if (r.hmm.M == 0) throw ConfigError("hmm.M: must be at least 1");
  if (r.hmm.K_out == 0) throw ConfigError("data.alphabet: must not be empty");
  if (r.predict.n == 0) throw ConfigError("predict.n: must be at least 1");
  if (r.partitions == 0) throw ConfigError("benchmark.partitions: must be at least 1");
  if (!(r.unlabeled_fraction >= 0.0 && r.unlabeled_fraction < 1.0)) {
    throw ConfigError("benchmark.unlabeled_fraction: must lie in [0, 1)");
  }
  for (double d : r.report_deltas) {
    if (!(d > 0.0 && d <= 1.0)) throw ConfigError("report.deltas: values must lie in (0, 1]");
  }
  try {
    t.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("trainer: ") + e.what());
  }
  return r;
}

}  // namespace sfm
