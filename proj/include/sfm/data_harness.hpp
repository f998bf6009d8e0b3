#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sfm/errors.hpp"
#include "sfm/feature_map.hpp"
#include "sfm/model_hmm.hpp"
#include "sfm/numerics.hpp"
#include "sfm/random.hpp"

namespace sfm {

/// Class id of an example with no label.
inline constexpr int kUnlabeled = -1;

/// Label text that marks a row as unlabeled.
inline constexpr std::string_view kUnlabeledTag = "?";

template <class Input>
struct Dataset {
  std::vector<Input> inputs;
  /// Index into class_names, or kUnlabeled.
  std::vector<int> class_ids;
  /// Sorted, so ids do not depend on row order.
  std::vector<std::string> class_names;
  /// Vector datasets: dimension. Sequence datasets: alphabet size.
  std::size_t dim = 0;
  /// Sequence datasets only: symbol i of the alphabet is token i.
  std::string alphabet;

  std::size_t size() const { return inputs.size(); }
  std::size_t class_count() const { return class_names.size(); }
};

using VectorDataset = Dataset<Vector>;
using SequenceDataset = Dataset<hmm::Sequence>;

enum class HeaderMode { automatic, present, absent };

struct VectorFormat {
  char delimiter = ',';
  /// Column holding the class label; negative values count from the end.
  int label_column = -1;
  HeaderMode header = HeaderMode::automatic;
};

struct SequenceFormat {
  char delimiter = ',';
  std::string alphabet = "ACDEFGHIKLMNPQRSTVWYBX";
  std::size_t min_length = 2;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline bool skippable(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

/// Assigns sorted class ids to raw label strings ("?" stays unlabeled).
inline void assign_classes(std::span<const std::string> raw, std::vector<int>& ids, std::vector<std::string>& names) {
  std::map<std::string, int> index;
  for (const auto& r : raw) {
    if (r != kUnlabeledTag) index.emplace(r, 0);
  }
  names.clear();
  for (auto& [name, id] : index) {
    id = static_cast<int>(names.size());
    names.push_back(name);
  }
  ids.clear();
  for (const auto& r : raw) ids.push_back(r == kUnlabeledTag ? kUnlabeled : index.at(r));
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open data file '" + path + "'");
  return in;
}

}  // namespace detail

/// Reads delimited numeric rows with one label column.
///
/// Blank lines and lines starting with '#' are skipped. In automatic header
/// mode the first data line is a header when any of its feature cells is not
/// a number.
inline VectorDataset parse_vectors(std::istream& in, const VectorFormat& fmt = {}) {
  VectorDataset ds;
  std::vector<std::string> raw_labels;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::skippable(line)) continue;
    const auto cells = detail::split(line, fmt.delimiter);
    const int n = static_cast<int>(cells.size());
    const int label_col = fmt.label_column < 0 ? n + fmt.label_column : fmt.label_column;
    if (label_col < 0 || label_col >= n) {
      throw ParseError(line_no, "label column " + std::to_string(fmt.label_column) + " is outside a row of " +
                                    std::to_string(n) + " cells");
    }
    if (first) {
      first = false;
      width = cells.size();
      bool numeric = true;
      for (int c = 0; c < n; ++c) {
        if (c != label_col && !detail::parse_double(cells[static_cast<std::size_t>(c)])) numeric = false;
      }
      if (fmt.header == HeaderMode::present || (fmt.header == HeaderMode::automatic && !numeric)) continue;
    }
    if (cells.size() != width) {
      throw ParseError(line_no, "row has " + std::to_string(cells.size()) + " cells, expected " + std::to_string(width));
    }
    Vector x;
    x.reserve(cells.size() - 1);
    for (int c = 0; c < n; ++c) {
      if (c == label_col) continue;
      const auto cell = cells[static_cast<std::size_t>(c)];
      if (cell.empty()) throw ParseError(line_no, "missing value in column " + std::to_string(c + 1));
      const auto v = detail::parse_double(cell);
      if (!v) throw ParseError(line_no, "non-numeric value '" + std::string(cell) + "' in column " + std::to_string(c + 1));
      x.push_back(*v);
    }
    const auto label = cells[static_cast<std::size_t>(label_col)];
    if (label.empty()) throw ParseError(line_no, "missing label");
    raw_labels.emplace_back(label);
    ds.inputs.push_back(std::move(x));
  }
  if (ds.inputs.empty()) throw ParseError(0, "no data rows");
  ds.dim = ds.inputs.front().size();
  if (ds.dim == 0) throw ParseError(0, "rows have no feature columns");
  detail::assign_classes(raw_labels, ds.class_ids, ds.class_names);
  return ds;
}

inline VectorDataset load_vectors(const std::string& path, const VectorFormat& fmt = {}) {
  auto in = detail::open_input(path);
  return parse_vectors(in, fmt);
}

/// Reads `<label><delimiter><letters>` records, one per line. Letters are
/// case-insensitive and must belong to the alphabet.
inline SequenceDataset parse_sequences(std::istream& in, const SequenceFormat& fmt = {}) {
  SequenceDataset ds;
  ds.alphabet = fmt.alphabet;
  ds.dim = fmt.alphabet.size();
  if (ds.dim == 0) throw ParseError(0, "empty alphabet");
  int lookup[256];
  std::fill(std::begin(lookup), std::end(lookup), -1);
  for (std::size_t k = 0; k < fmt.alphabet.size(); ++k) {
    const auto c = static_cast<unsigned char>(std::toupper(static_cast<unsigned char>(fmt.alphabet[k])));
    if (lookup[c] != -1) throw ParseError(0, std::string("alphabet repeats letter '") + fmt.alphabet[k] + "'");
    lookup[c] = static_cast<int>(k);
  }
  std::vector<std::string> raw_labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::skippable(line)) continue;
    const auto pos = line.find(fmt.delimiter);
    if (pos == std::string::npos) throw ParseError(line_no, "expected '<label>" + std::string(1, fmt.delimiter) + "<sequence>'");
    const auto label = detail::trim(std::string_view(line).substr(0, pos));
    const auto letters = detail::trim(std::string_view(line).substr(pos + 1));
    if (label.empty()) throw ParseError(line_no, "missing label");
    hmm::Sequence seq;
    seq.reserve(letters.size());
    for (std::size_t i = 0; i < letters.size(); ++i) {
      const auto c = static_cast<unsigned char>(std::toupper(static_cast<unsigned char>(letters[i])));
      if (lookup[c] < 0) {
        throw ParseError(line_no, std::string("letter '") + letters[i] + "' at position " + std::to_string(i + 1) +
                                      " is not in the alphabet");
      }
      seq.push_back(lookup[c]);
    }
    if (seq.size() < fmt.min_length) {
      throw ParseError(line_no, "sequence of length " + std::to_string(seq.size()) + " is shorter than " +
                                    std::to_string(fmt.min_length));
    }
    raw_labels.emplace_back(label);
    ds.inputs.push_back(std::move(seq));
  }
  if (ds.inputs.empty()) throw ParseError(0, "no sequence records");
  detail::assign_classes(raw_labels, ds.class_ids, ds.class_names);
  return ds;
}

inline SequenceDataset load_sequences(const std::string& path, const SequenceFormat& fmt = {}) {
  auto in = detail::open_input(path);
  return parse_sequences(in, fmt);
}

inline std::string to_letters(const hmm::Sequence& seq, const std::string& alphabet) {
  std::string s;
  s.reserve(seq.size());
  for (int t : seq) s.push_back(alphabet.at(static_cast<std::size_t>(t)));
  return s;
}

/// Per-feature centering and scaling, fit on a chosen subset of rows.
struct Standardizer {
  Vector mean;
  Vector scale;

  bool empty() const { return mean.empty(); }

  static Standardizer fit(std::span<const Vector> xs, std::span<const std::size_t> rows) {
    if (rows.empty()) throw InvalidArgument("Standardizer: no rows to fit");
    const std::size_t d = xs[rows.front()].size();
    Standardizer s{Vector(d, 0.0), Vector(d, 0.0)};
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += xs[r][j];
    }
    const double n = static_cast<double>(rows.size());
    for (double& v : s.mean) v /= n;
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < d; ++j) s.scale[j] += (xs[r][j] - s.mean[j]) * (xs[r][j] - s.mean[j]);
    }
    for (double& v : s.scale) {
      v = std::sqrt(v / n);
      if (!(v > 0.0)) v = 1.0;
    }
    return s;
  }

  Vector apply(const Vector& x) const {
    if (empty()) return x;
    if (x.size() != mean.size()) throw InvalidArgument("Standardizer: dimension mismatch");
    Vector out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
    return out;
  }
};

/// One class against the union of all others.
struct BinaryTask {
  std::size_t positive_class = 0;
  std::string name;
  /// Per example; unlabeled rows stay unlabeled.
  std::vector<Label> labels;

  std::size_t count(Label y) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), y)); }
};

template <class Input>
BinaryTask binary_task(const Dataset<Input>& ds, std::size_t positive_class) {
  if (positive_class >= ds.class_count()) throw InvalidArgument("binary_task: unknown class");
  BinaryTask t{positive_class, ds.class_names[positive_class], {}};
  t.labels.reserve(ds.size());
  for (int id : ds.class_ids) {
    t.labels.push_back(id == kUnlabeled                               ? Label::unlabeled
                       : static_cast<std::size_t>(id) == positive_class ? Label::positive
                                                                        : Label::negative);
  }
  return t;
}

template <class Input>
std::vector<BinaryTask> one_vs_rest_tasks(const Dataset<Input>& ds) {
  if (ds.class_count() < 2) throw InvalidArgument("one_vs_rest_tasks: need at least 2 classes");
  std::vector<BinaryTask> tasks;
  for (std::size_t c = 0; c < ds.class_count(); ++c) tasks.push_back(binary_task(ds, c));
  return tasks;
}

/// Index lists of one random partition. The unlabeled pool is carved out of
/// the test half and is not scored.
struct TaskSplit {
  std::vector<std::size_t> train_l;
  std::vector<std::size_t> train_u;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  std::size_t positive_class = 0;
};

/// Stratified 50/50 train/test partitions; in each class the training half
/// gets the extra example when the count is odd. With unlabeled_fraction > 0
/// that fraction of each class's test half (rounded) becomes the unlabeled
/// training pool.
inline std::vector<TaskSplit> make_splits(const BinaryTask& task, std::size_t n_partitions, double unlabeled_fraction,
                                          std::uint64_t seed) {
  if (n_partitions == 0) throw InvalidArgument("make_splits: n_partitions must be at least 1");
  if (!(unlabeled_fraction >= 0.0 && unlabeled_fraction < 1.0)) {
    throw InvalidArgument("make_splits: unlabeled_fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < task.labels.size(); ++i) {
    if (task.labels[i] == Label::positive) pos.push_back(i);
    if (task.labels[i] == Label::negative) neg.push_back(i);
  }
  if (pos.size() < 2 || neg.size() < 2) {
    throw InvalidArgument("make_splits: task '" + task.name + "' needs at least 2 examples per side");
  }
  std::vector<TaskSplit> splits;
  for (std::size_t p = 0; p < n_partitions; ++p) {
    TaskSplit s;
    s.seed = derive_seed(seed, {p});
    s.positive_class = task.positive_class;
    Rng rng(s.seed);
    for (auto group : {pos, neg}) {
      shuffle_in_place(std::span<std::size_t>(group), rng);
      const std::size_t n_train = (group.size() + 1) / 2;
      const std::size_t n_test = group.size() - n_train;
      const auto n_unl = static_cast<std::size_t>(std::lround(unlabeled_fraction * static_cast<double>(n_test)));
      s.train_l.insert(s.train_l.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_train));
      const auto test_begin = group.begin() + static_cast<std::ptrdiff_t>(n_train);
      s.train_u.insert(s.train_u.end(), test_begin, test_begin + static_cast<std::ptrdiff_t>(n_unl));
      s.test.insert(s.test.end(), test_begin + static_cast<std::ptrdiff_t>(n_unl), group.end());
    }
    std::sort(s.train_l.begin(), s.train_l.end());
    std::sort(s.train_u.begin(), s.train_u.end());
    std::sort(s.test.begin(), s.test.end());
    splits.push_back(std::move(s));
  }
  return splits;
}

/// Keeps `n_labeled` training examples, split between the two sides in
/// proportion to their counts with at least one each.
inline TaskSplit subsample_labeled(const TaskSplit& split, const BinaryTask& task, std::size_t n_labeled,
                                   std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i : split.train_l) (task.labels[i] == Label::positive ? pos : neg).push_back(i);
  if (n_labeled < 2) throw InvalidArgument("subsample_labeled: need at least 2 labeled examples");
  if (n_labeled >= split.train_l.size()) return split;
  const double share = static_cast<double>(pos.size()) / static_cast<double>(split.train_l.size());
  std::size_t n_pos = static_cast<std::size_t>(std::lround(share * static_cast<double>(n_labeled)));
  n_pos = std::clamp<std::size_t>(n_pos, 1, std::min(pos.size(), n_labeled - 1));
  const std::size_t n_neg = std::min(neg.size(), n_labeled - n_pos);
  Rng rng(derive_seed(seed, {n_labeled}));
  shuffle_in_place(std::span<std::size_t>(pos), rng);
  shuffle_in_place(std::span<std::size_t>(neg), rng);
  TaskSplit out = split;
  out.train_l.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_pos));
  out.train_l.insert(out.train_l.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_neg));
  std::sort(out.train_l.begin(), out.train_l.end());
  return out;
}

struct Summary {
  double mean_percent = 0.0;
  double std_percent = 0.0;
};

/// Mean and sample standard deviation (n - 1 denominator) of accuracies in
/// [0, 1], reported in percent. A single value has std 0.
inline Summary aggregate(std::span<const double> accuracies) {
  if (accuracies.empty()) throw InvalidArgument("aggregate: no results");
  const double n = static_cast<double>(accuracies.size());
  double mean = 0.0;
  for (double a : accuracies) mean += a;
  mean /= n;
  double ss = 0.0;
  for (double a : accuracies) ss += (a - mean) * (a - mean);
  const auto [lo, hi] = std::minmax_element(accuracies.begin(), accuracies.end());
  const double sd = accuracies.size() > 1 && *lo != *hi ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return {100.0 * mean, 100.0 * sd};
}

}  // namespace sfm
