#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "sfm/config.hpp"
#include "sfm/data_harness.hpp"
#include "sfm/io.hpp"
#include "sfm/parallel.hpp"
#include "sfm/predictor.hpp"
#include "sfm/selftest.hpp"
#include "sfm/trainer.hpp"

namespace sfm {

namespace detail {

inline void require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw ConfigError(key + ": a path is required");
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(key + ": file '" + path + "' does not exist");
}

inline void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

template <class Backend>
Backend make_backend(const RunConfig& rc) {
  if constexpr (std::is_same_v<Backend, gmm::GmmBackend>) {
    return gmm::GmmBackend(rc.gmm);
  } else {
    return hmm::HmmBackend(rc.hmm);
  }
}

template <class Backend>
Dataset<typename Backend::Input> load_for(const RunConfig& rc, const std::string& key, const std::string& path) {
  require_file(key, path);
  if constexpr (std::is_same_v<Backend, gmm::GmmBackend>) {
    return load_vectors(path, rc.vector_format);
  } else {
    return load_sequences(path, rc.sequence_format);
  }
}

template <class Input>
std::size_t find_class(const Dataset<Input>& ds, const std::string& name) {
  if (name.empty()) return 0;
  const auto it = std::find(ds.class_names.begin(), ds.class_names.end(), name);
  if (it == ds.class_names.end()) throw ConfigError("task.positive_class: class '" + name + "' is not in the data");
  return static_cast<std::size_t>(it - ds.class_names.begin());
}

inline std::string negative_name(const std::vector<std::string>& names, std::size_t positive) {
  return names.size() == 2 ? names[1 - positive] : "rest";
}

/// Applies the meta's standardization to vector inputs; sequences pass through.
template <class Input>
Input prepare(const ModelMeta& meta, const Input& x) {
  if constexpr (std::is_same_v<Input, Vector>) {
    return meta.standardizer.apply(x);
  } else {
    return x;
  }
}

/// Fits standardization on `rows` when enabled for vector data.
template <class Input>
Standardizer fit_standardizer(const RunConfig& rc, const Dataset<Input>& ds, std::span<const std::size_t> rows) {
  if constexpr (std::is_same_v<Input, Vector>) {
    if (rc.standardize) return Standardizer::fit(ds.inputs, rows);
  }
  return {};
}

template <class Input>
std::vector<Label> labels_by_name(const Dataset<Input>& ds, const ModelMeta& meta) {
  std::vector<Label> out;
  for (int id : ds.class_ids) {
    out.push_back(id == kUnlabeled ? Label::unlabeled
                  : ds.class_names[static_cast<std::size_t>(id)] == meta.positive_name ? Label::positive
                                                                                         : Label::negative);
  }
  return out;
}

/// Accuracy over the labeled entries of (xs, ys); NaN when none is labeled.
template <class Backend>
double labeled_accuracy(const TrainedTask<Backend>& task, const std::vector<typename Backend::Input>& xs,
                        const std::vector<Label>& ys, const RunConfig& rc) {
  std::vector<typename Backend::Input> keep;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (ys[i] == Label::unlabeled) continue;
    keep.push_back(xs[i]);
    labels.push_back(ys[i]);
  }
  if (keep.empty()) return std::numeric_limits<double>::quiet_NaN();
  return evaluate(task, std::span<const typename Backend::Input>(keep), std::span<const Label>(labels), rc.predict,
                  rc.predict_seed);
}

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainSummary {
  double J = 0.0;
  double R_S = 0.0;
  double bound_supervised = 0.0;
  double bound_semisupervised = 0.0;
  double C = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double train_accuracy = 0.0;
  /// NaN without data.test_path.
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::string model_path;
  std::string telemetry_path;
};

template <class Backend>
TrainSummary train_with(const RunConfig& rc) {
  using Input = typename Backend::Input;
  auto ds = detail::load_for<Backend>(rc, "data.path", rc.data_path);
  if (ds.class_count() < 2) throw ConfigError("data.path: training needs at least 2 classes");
  const std::size_t positive = detail::find_class(ds, rc.positive_class);
  const BinaryTask task = binary_task(ds, positive);

  std::vector<std::size_t> labeled_rows, unlabeled_rows;
  for (std::size_t i = 0; i < ds.size(); ++i) (ds.class_ids[i] == kUnlabeled ? unlabeled_rows : labeled_rows).push_back(i);

  SavedModel<Backend> saved{ModelMeta{ds.class_names[positive], detail::negative_name(ds.class_names, positive),
                                      detail::fit_standardizer(rc, ds, labeled_rows), ds.alphabet},
                            {}};
  TrainingSet<Input> data;
  for (std::size_t i : labeled_rows) {
    data.labeled.push_back(detail::prepare(saved.meta, ds.inputs[i]));
    data.labels.push_back(task.labels[i]);
  }
  if (rc.mode == Mode::semi) {
    for (std::size_t i : unlabeled_rows) data.unlabeled.push_back(detail::prepare(saved.meta, ds.inputs[i]));
    if (!rc.unlabeled_path.empty()) {
      const auto extra = detail::load_for<Backend>(rc, "data.unlabeled_path", rc.unlabeled_path);
      for (const auto& x : extra.inputs) data.unlabeled.push_back(detail::prepare(saved.meta, x));
    }
  }

  const Backend backend = detail::make_backend<Backend>(rc);
  saved.task = multi_restart_train(backend, data, rc.train);
  const auto& t = saved.task;

  detail::ensure_dir(rc.output_dir);
  std::filesystem::path model_path(rc.model_path);
  if (model_path.has_parent_path()) std::filesystem::create_directories(model_path.parent_path());
  save_model(rc.model_path, saved);
  const std::string telemetry_path = rc.output_dir + "/telemetry.csv";
  {
    std::ofstream out(telemetry_path);
    if (!out) throw std::runtime_error("cannot write '" + telemetry_path + "'");
    std::vector<TelemetryRow> rows;
    for (const auto& rec : t.history) rows.push_back(telemetry_row(rec));
    write_telemetry(out, rows);
  }

  TrainSummary s;
  const auto& last = t.history.back().risks;
  s.J = last.J;
  s.R_S = last.R_S;
  s.bound_supervised = last.bound_supervised;
  s.bound_semisupervised = last.bound_semisupervised;
  s.C = t.C;
  s.iterations = t.history.size();
  s.converged = t.converged;
  s.train_accuracy = detail::labeled_accuracy(t, data.labeled, data.labels, rc);
  if (!rc.test_path.empty()) {
    const auto test = detail::load_for<Backend>(rc, "data.test_path", rc.test_path);
    std::vector<Input> xs;
    for (const auto& x : test.inputs) xs.push_back(detail::prepare(saved.meta, x));
    s.test_accuracy = detail::labeled_accuracy(t, xs, detail::labels_by_name(test, saved.meta), rc);
  }
  s.model_path = rc.model_path;
  s.telemetry_path = telemetry_path;
  return s;
}

inline TrainSummary cmd_train(const RunConfig& rc, std::ostream& out) {
  const TrainSummary s = rc.family == ModelFamily::gmm ? train_with<gmm::GmmBackend>(rc) : train_with<hmm::HmmBackend>(rc);
  out << "iterations      " << s.iterations << (s.converged ? " (converged)" : "") << "\n"
      << "final J(u)      " << format_real(s.J) << "\n"
      << "R_S             " << format_real(s.R_S) << "\n"
      << "C               " << format_real(s.C) << "\n"
      << "bound (sup)     " << format_real(s.bound_supervised) << "\n"
      << "bound (semi)    " << format_real(s.bound_semisupervised) << "\n"
      << "train accuracy  " << detail::percent(s.train_accuracy) << "%\n";
  if (!std::isnan(s.test_accuracy)) out << "test accuracy   " << detail::percent(s.test_accuracy) << "%\n";
  out << "model           " << s.model_path << "\n"
      << "telemetry       " << s.telemetry_path << "\n";
  return s;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

template <class Backend>
double predict_with(const RunConfig& rc, std::istream& model_in, std::ostream& out) {
  using Input = typename Backend::Input;
  const auto saved = read_model<Backend>(model_in);
  RunConfig local = rc;
  if constexpr (std::is_same_v<Backend, hmm::HmmBackend>) local.sequence_format.alphabet = saved.meta.alphabet;
  const auto ds = detail::load_for<Backend>(local, "data.path", rc.data_path);
  std::vector<Input> xs;
  for (const auto& x : ds.inputs) xs.push_back(detail::prepare(saved.meta, x));
  const auto preds = predict_all(saved.task, std::span<const Input>(xs), rc.predict, rc.predict_seed);
  const auto truth = detail::labels_by_name(ds, saved.meta);

  detail::ensure_dir(rc.output_dir);
  const std::string path = rc.output_dir + "/predictions.csv";
  std::ofstream csv(path);
  if (!csv) throw std::runtime_error("cannot write '" + path + "'");
  csv << "index,label,score\n";
  std::size_t correct = 0, scored = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& name = preds[i].label == Label::positive ? saved.meta.positive_name : saved.meta.negative_name;
    csv << i << ',' << csv_cell(name) << ',' << format_real(preds[i].score) << "\n";
    if (truth[i] != Label::unlabeled) {
      ++scored;
      correct += preds[i].label == truth[i] ? 1 : 0;
    }
  }
  out << "predictions     " << path << " (" << preds.size() << " rows)\n";
  if (scored == 0) return std::numeric_limits<double>::quiet_NaN();
  const double acc = static_cast<double>(correct) / static_cast<double>(scored);
  out << "accuracy        " << detail::percent(acc) << "% on " << scored << " labeled rows\n";
  return acc;
}

inline double cmd_predict(const RunConfig& rc, std::ostream& out) {
  auto in = open_model(rc.model_path);
  return peek_backend(in) == BackendKind::gmm ? predict_with<gmm::GmmBackend>(rc, in, out)
                                              : predict_with<hmm::HmmBackend>(rc, in, out);
}

// ---------------------------------------------------------------------------
// bound-report
// ---------------------------------------------------------------------------

struct BoundLine {
  double delta = 0.0;
  double supervised = 0.0;
  double semisupervised = 0.0;
};

struct BoundReport {
  RiskReport risks;
  double C = 0.0;
  std::size_t m = 0;
  std::vector<BoundLine> lines;
};

/// Draws tilted hidden samples for (xs, ys) at the model's (u, C) and
/// evaluates both bounds at each delta.
template <class Backend>
BoundReport bound_report_for(const TrainedTask<Backend>& task, const std::vector<typename Backend::Input>& xs,
                             const std::vector<Label>& ys, const TrainConfig& cfg, std::span<const double> deltas) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (ys[i] != Label::unlabeled) order.push_back(i);
  }
  const std::size_t m_l = order.size();
  if (m_l == 0) throw InvalidArgument("bound-report: data has no labeled rows");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (ys[i] == Label::unlabeled) order.push_back(i);
  }
  for (const auto& x : xs) {
    task.backend.validate(x, task.models.plus);
    task.backend.validate(x, task.models.minus);
  }
  const std::size_t m = order.size();
  const TiltConfig tilt{task.C, m, m_l, m - m_l, cfg.weight_scale, cfg.n_draws, cfg.attempts_limit()};
  std::vector<HiddenSampleSet<Backend>> sets(m);
  parallel_for(m, [&](std::size_t k) {
    Rng rng = make_stream(cfg.seed, {detail::kSampleStream, 0, k});
    sets[k] = rejection_sample(task.backend, xs[order[k]], ys[order[k]], task.models, task.u, tilt, rng, k);
  });
  FeatureSet fs;
  for (std::size_t k = 0; k < m; ++k) {
    (k < m_l ? fs.labeled : fs.unlabeled).push_back(to_features(sets[k], ys[order[k]]));
  }
  BoundReport rep;
  rep.C = task.C;
  rep.m = m;
  rep.risks = assess_samples(std::span<const HiddenSampleSet<Backend>>(sets), fs, task.u, task.u0, task.C, task.delta,
                             cfg.exact_pairing);
  const double risk = rep.risks.e_S + 0.5 * rep.risks.d_S;
  for (double d : deltas) {
    BoundLine line{d, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    if (task.C > 0.0) {
      const double md = static_cast<double>(m);
      line.supervised = bound_supervised(rep.risks.R_S, rep.risks.kl_total, task.C, d, md);
      line.semisupervised = bound_supervised(risk, rep.risks.kl_total, task.C, d, md);
    }
    rep.lines.push_back(line);
  }
  return rep;
}

template <class Backend>
BoundReport bound_report_with(const RunConfig& rc, std::istream& model_in) {
  using Input = typename Backend::Input;
  const auto saved = read_model<Backend>(model_in);
  RunConfig local = rc;
  if constexpr (std::is_same_v<Backend, hmm::HmmBackend>) local.sequence_format.alphabet = saved.meta.alphabet;
  const auto ds = detail::load_for<Backend>(local, "data.path", rc.data_path);
  std::vector<Input> xs;
  for (const auto& x : ds.inputs) xs.push_back(detail::prepare(saved.meta, x));
  std::vector<double> deltas{saved.task.delta};
  deltas.insert(deltas.end(), rc.report_deltas.begin(), rc.report_deltas.end());
  return bound_report_for(saved.task, xs, detail::labels_by_name(ds, saved.meta), rc.train, deltas);
}

inline BoundReport cmd_bound_report(const RunConfig& rc, std::ostream& out) {
  auto in = open_model(rc.model_path);
  const auto rep = peek_backend(in) == BackendKind::gmm ? bound_report_with<gmm::GmmBackend>(rc, in)
                                                        : bound_report_with<hmm::HmmBackend>(rc, in);
  const auto& r = rep.risks;
  out << "m               " << rep.m << "\n"
      << "C               " << format_real(rep.C) << "\n"
      << "R_S             " << format_real(r.R_S) << "\n"
      << "e_S             " << format_real(r.e_S) << "\n"
      << "d_S             " << format_real(r.d_S) << "\n"
      << "d_Su            " << format_real(r.d_Su) << "\n"
      << "KL weights      " << format_real(r.kl_w) << "\n"
      << "KL hidden       " << format_real(r.kl_hidden) << "\n"
      << "KL total        " << format_real(r.kl_total) << "\n"
      << "delta,bound_supervised_raw,bound_supervised_clamped,bound_semisupervised_raw,bound_semisupervised_clamped\n";
  for (const auto& l : rep.lines) {
    out << format_real(l.delta) << ',' << format_real(l.supervised) << ',' << format_real(clamp_bound(l.supervised))
        << ',' << format_real(l.semisupervised) << ',' << format_real(clamp_bound(l.semisupervised)) << "\n";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

struct SummaryRow {
  std::string task;
  std::string mode;
  std::size_t n_labeled = 0;
  Summary accuracy;
  std::size_t partitions = 0;
};

struct BenchmarkOutcome {
  std::vector<ResultRow> results;
  /// Per task, then one "macro" row, for each labeled-set size.
  std::vector<SummaryRow> summary;
  std::vector<std::string> failures;
};

template <class Backend>
BenchmarkOutcome benchmark_with(const RunConfig& rc) {
  using Input = typename Backend::Input;
  const auto ds = detail::load_for<Backend>(rc, "data.path", rc.data_path);
  const auto tasks = one_vs_rest_tasks(ds);
  const double unl = rc.mode == Mode::semi ? rc.unlabeled_fraction : 0.0;
  std::vector<std::vector<TaskSplit>> splits;
  for (const auto& t : tasks) splits.push_back(make_splits(t, rc.partitions, unl, rc.benchmark_seed));
  // 0 stands for "all labeled training examples".
  const std::vector<std::size_t> sizes = rc.learning_curve.empty() ? std::vector<std::size_t>{0} : rc.learning_curve;
  const std::string mode = rc.mode == Mode::semi ? "semi" : "supervised";

  const std::size_t per_size = tasks.size() * rc.partitions;
  const std::size_t units = sizes.size() * per_size;
  std::vector<std::optional<ResultRow>> rows(units);
  std::vector<std::string> errors(units);
  const Backend backend = detail::make_backend<Backend>(rc);
  parallel_for(units, [&](std::size_t u) {
    const std::size_t s = u / per_size;
    const std::size_t t = (u % per_size) / rc.partitions;
    const std::size_t p = u % rc.partitions;
    const auto started = std::chrono::steady_clock::now();
    TaskSplit split = splits[t][p];
    if (sizes[s] > 0) split = subsample_labeled(split, tasks[t], sizes[s], split.seed);
    ModelMeta meta;
    meta.standardizer = detail::fit_standardizer(rc, ds, split.train_l);
    TrainingSet<Input> data;
    for (std::size_t i : split.train_l) {
      data.labeled.push_back(detail::prepare(meta, ds.inputs[i]));
      data.labels.push_back(tasks[t].labels[i]);
    }
    for (std::size_t i : split.train_u) data.unlabeled.push_back(detail::prepare(meta, ds.inputs[i]));
    std::vector<Input> test;
    std::vector<Label> truth;
    for (std::size_t i : split.test) {
      test.push_back(detail::prepare(meta, ds.inputs[i]));
      truth.push_back(tasks[t].labels[i]);
    }
    TrainConfig cfg = rc.train;
    cfg.seed = derive_seed(rc.train.seed, {t, p, sizes[s]});
    try {
      const auto trained = multi_restart_train(backend, data, cfg);
      const auto& last = trained.history.back().risks;
      const double bound = rc.mode == Mode::semi ? last.bound_semisupervised : last.bound_supervised;
      const double acc = evaluate(trained, std::span<const Input>(test), std::span<const Label>(truth), rc.predict,
                                  derive_seed(rc.predict_seed, {t, p}));
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      rows[u] = ResultRow{tasks[t].name, p, mode, data.m_l(), acc, bound, clamp_bound(bound), secs};
    } catch (const std::exception& e) {
      errors[u] = "task " + tasks[t].name + " partition " + std::to_string(p) + ": " + e.what();
    }
  });

  BenchmarkOutcome out;
  for (std::size_t u = 0; u < units; ++u) {
    if (rows[u]) out.results.push_back(*rows[u]);
    if (!errors[u].empty()) out.failures.push_back(errors[u]);
  }
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    std::vector<double> per_partition(rc.partitions, 0.0);
    std::vector<std::size_t> per_partition_n(rc.partitions, 0);
    double macro_mean = 0.0;
    std::size_t n_tasks = 0;
    std::size_t n_labeled = 0;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      std::vector<double> accs;
      std::size_t task_n = 0;
      for (std::size_t p = 0; p < rc.partitions; ++p) {
        const auto& row = rows[s * per_size + t * rc.partitions + p];
        if (!row) continue;
        accs.push_back(row->accuracy);
        per_partition[p] += row->accuracy;
        ++per_partition_n[p];
        task_n = std::max(task_n, row->n_labeled);
      }
      n_labeled = std::max(n_labeled, task_n);
      if (accs.empty()) continue;
      const Summary sm = aggregate(accs);
      out.summary.push_back({tasks[t].name, mode, sizes[s] > 0 ? sizes[s] : task_n, sm, accs.size()});
      macro_mean += sm.mean_percent;
      ++n_tasks;
    }
    if (n_tasks == 0) continue;
    std::vector<double> partition_means;
    for (std::size_t p = 0; p < rc.partitions; ++p) {
      if (per_partition_n[p] > 0) partition_means.push_back(per_partition[p] / static_cast<double>(per_partition_n[p]));
    }
    Summary macro = aggregate(partition_means);
    macro.mean_percent = macro_mean / static_cast<double>(n_tasks);
    out.summary.push_back({"macro", mode, sizes[s] > 0 ? sizes[s] : n_labeled, macro, partition_means.size()});
  }
  return out;
}

inline void write_summary(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "task,mode,n_labeled,mean_percent,std_percent,partitions\n";
  for (const auto& r : rows) {
    out << csv_cell(r.task) << ',' << r.mode << ',' << r.n_labeled << ',' << format_real(r.accuracy.mean_percent)
        << ',' << format_real(r.accuracy.std_percent) << ',' << r.partitions << "\n";
  }
}

inline BenchmarkOutcome cmd_benchmark(const RunConfig& rc, std::ostream& out) {
  auto res = rc.family == ModelFamily::gmm ? benchmark_with<gmm::GmmBackend>(rc) : benchmark_with<hmm::HmmBackend>(rc);
  detail::ensure_dir(rc.output_dir);
  {
    std::ofstream f(rc.output_dir + "/results.csv");
    if (!f) throw std::runtime_error("cannot write '" + rc.output_dir + "/results.csv'");
    write_results(f, res.results);
  }
  {
    std::ofstream f(rc.output_dir + "/summary.csv");
    if (!f) throw std::runtime_error("cannot write '" + rc.output_dir + "/summary.csv'");
    write_summary(f, res.summary);
  }
  for (const auto& r : res.summary) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%6.2f +- %5.2f", r.accuracy.mean_percent, r.accuracy.std_percent);
    out << r.task << "  " << r.mode << "  n_labeled=" << r.n_labeled << "  " << buf << "  (" << r.partitions
        << " partitions)\n";
  }
  for (const auto& f : res.failures) out << "FAILED " << f << "\n";
  out << "results         " << rc.output_dir << "/results.csv\n";
  return res;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

inline bool cmd_selftest(std::ostream& out, const SelftestHooks& hooks = {}) {
  return report_selftest(out, run_selftest(hooks));
}

}  // namespace sfm
