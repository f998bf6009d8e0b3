#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "support.hpp"

namespace sfm {
namespace {

VectorDataset vectors(const std::string& text, VectorFormat fmt = {}) {
  std::istringstream in(text);
  return parse_vectors(in, fmt);
}

SequenceDataset sequences(const std::string& text, SequenceFormat fmt = {}) {
  std::istringstream in(text);
  return parse_sequences(in, fmt);
}

std::size_t line_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

TEST(LoadVectors, WellFormedRows) {
  const auto ds = vectors("1,2,b\n3,4,a\n5,6,b\n");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim, 2u);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.class_ids, (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(ds.inputs[1], (Vector{3.0, 4.0}));
}

TEST(LoadVectors, HeaderCommentsAndLabelColumn) {
  const auto ds = vectors("# comment\nlabel;x;y\n\nup;1.5;2\ndown;-1;0\n", VectorFormat{';', 0, HeaderMode::automatic});
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.inputs[0], (Vector{1.5, 2.0}));
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"down", "up"}));
}

TEST(LoadVectors, UnlabeledTag) {
  const auto ds = vectors("1,2,a\n3,4,?\n5,6,b\n");
  EXPECT_EQ(ds.class_ids[1], kUnlabeled);
  EXPECT_EQ(ds.class_count(), 2u);
}

TEST(LoadVectors, ErrorsNameTheRow) {
  EXPECT_EQ(line_of([] { vectors("1,2,a\n3,,b\n"); }), 2u);
  EXPECT_EQ(line_of([] { vectors("1,2,a\n3,4,b\n5,b\n"); }), 3u);
  EXPECT_EQ(line_of([] { vectors("1,2,a\n3,x,b\n", VectorFormat{',', -1, HeaderMode::absent}); }), 2u);
  EXPECT_EQ(line_of([] { vectors("1,2,a\n3,nan,b\n"); }), 2u);
  EXPECT_EQ(line_of([] { vectors("1,2,a\n3,4,\n"); }), 2u);
  EXPECT_THROW(vectors("# nothing\n"), ParseError);
}

TEST(LoadVectors, MissingFile) {
  EXPECT_THROW(load_vectors("/nonexistent/file.csv"), std::exception);
}

TEST(LoadSequences, WellFormedRecords) {
  const auto ds = sequences("pos,ACD\nneg,dca\n", SequenceFormat{',', "ACDE", 2});
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.dim, 4u);
  EXPECT_EQ(ds.inputs[0], (hmm::Sequence{0, 1, 2}));
  EXPECT_EQ(ds.inputs[1], (hmm::Sequence{2, 1, 0}));
}

TEST(LoadSequences, BadLetterAndShortSequence) {
  EXPECT_EQ(line_of([] { sequences("pos,ACD\nneg,AZ\n", SequenceFormat{',', "ACDE", 2}); }), 2u);
  EXPECT_EQ(line_of([] { sequences("pos,A\n", SequenceFormat{',', "ACDE", 2}); }), 1u);
  EXPECT_EQ(line_of([] { sequences("ACDE\n", SequenceFormat{',', "ACDE", 2}); }), 1u);
}

TEST(LoadSequences, LettersRoundTrip) {
  const std::string alphabet = "ACDEFGHIKLMNPQRSTVWYBX";
  const std::string text = "ACDEFGHIKLMNPQRSTVWYBXXBA";
  const auto ds = sequences("c," + text + "\n");
  EXPECT_EQ(to_letters(ds.inputs[0], alphabet), text);
}

TEST(Standardizer, TrainingRowsAreCentered) {
  Rng rng(91);
  std::normal_distribution<double> n(5.0, 3.0);
  std::vector<Vector> xs(50);
  for (auto& x : xs) x = {n(rng), 100.0 + n(rng), 7.0};
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < 50; i += 2) rows.push_back(i);
  const auto s = Standardizer::fit(xs, rows);
  Vector mean(3, 0.0), sq(3, 0.0);
  for (std::size_t r : rows) {
    const auto z = s.apply(xs[r]);
    for (std::size_t j = 0; j < 3; ++j) {
      mean[j] += z[j] / static_cast<double>(rows.size());
      sq[j] += z[j] * z[j] / static_cast<double>(rows.size());
    }
  }
  for (std::size_t j = 0; j < 3; ++j) EXPECT_LT(std::abs(mean[j]), 1e-10);
  EXPECT_NEAR(sq[0], 1.0, 1e-12);
  EXPECT_NEAR(sq[1], 1.0, 1e-12);
  EXPECT_EQ(s.scale[2], 1.0);
}

VectorDataset labelled(const std::vector<int>& ids, std::size_t classes) {
  VectorDataset ds;
  for (std::size_t i = 0; i < ids.size(); ++i) ds.inputs.push_back({static_cast<double>(i)});
  ds.class_ids = ids;
  for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
  ds.dim = 1;
  return ds;
}

TEST(OneVsRest, TwoClassesMirror) {
  const auto tasks = one_vs_rest_tasks(labelled({0, 1, 1, 0, 1}, 2));
  ASSERT_EQ(tasks.size(), 2u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(sign_of(tasks[0].labels[i]), -sign_of(tasks[1].labels[i]));
}

TEST(OneVsRest, CountsAreConserved) {
  std::vector<int> ids;
  for (int i = 0; i < 100; ++i) ids.push_back((i * 7) % 8);
  const auto tasks = one_vs_rest_tasks(labelled(ids, 8));
  ASSERT_EQ(tasks.size(), 8u);
  for (std::size_t c = 0; c < 8; ++c) {
    const auto n_c = static_cast<std::size_t>(std::count(ids.begin(), ids.end(), static_cast<int>(c)));
    EXPECT_EQ(tasks[c].count(Label::positive), n_c);
    EXPECT_EQ(tasks[c].count(Label::negative), 100 - n_c);
  }
  EXPECT_THROW(one_vs_rest_tasks(labelled({0, 0}, 1)), InvalidArgument);
}

BinaryTask task_of(std::size_t n_pos, std::size_t n_neg) {
  BinaryTask t;
  t.name = "t";
  t.labels.assign(n_pos + n_neg, Label::negative);
  for (std::size_t i = 0; i < n_pos; ++i) t.labels[i * (n_pos + n_neg) / n_pos] = Label::positive;
  return t;
}

TEST(Splits, TwentyDistinctDisjointPartitions) {
  const auto task = task_of(31, 48);
  const auto splits = make_splits(task, 20, 0.25, 2024);
  ASSERT_EQ(splits.size(), 20u);
  std::set<std::uint64_t> seeds;
  std::set<std::vector<std::size_t>> trains;
  for (const auto& s : splits) {
    seeds.insert(s.seed);
    trains.insert(s.train_l);
    std::set<std::size_t> seen;
    for (const auto* part : {&s.train_l, &s.train_u, &s.test}) {
      for (std::size_t i : *part) EXPECT_TRUE(seen.insert(i).second);
    }
    EXPECT_EQ(seen.size(), task.labels.size());
  }
  EXPECT_EQ(seeds.size(), 20u);
  EXPECT_EQ(trains.size(), 20u);
}

TEST(Splits, StratifiedHalves) {
  const auto task = task_of(31, 48);
  for (const auto& s : make_splits(task, 5, 0.25, 7)) {
    auto count = [&](const std::vector<std::size_t>& idx, Label y) {
      return std::count_if(idx.begin(), idx.end(), [&](std::size_t i) { return task.labels[i] == y; });
    };
    for (auto [y, n] : {std::pair{Label::positive, 31L}, std::pair{Label::negative, 48L}}) {
      const long train = count(s.train_l, y);
      const long held = count(s.train_u, y) + count(s.test, y);
      EXPECT_LE(std::abs(train - held), 1);
      EXPECT_EQ(train + held, n);
      EXPECT_EQ(count(s.train_u, y), std::lround(0.25 * static_cast<double>(held)));
    }
  }
}

TEST(Splits, SupervisedProtocolLeavesTestWhole) {
  const auto task = task_of(10, 10);
  for (const auto& s : make_splits(task, 3, 0.0, 1)) {
    EXPECT_TRUE(s.train_u.empty());
    EXPECT_EQ(s.test.size(), 10u);
  }
}

TEST(Splits, DeterministicFromSeed) {
  const auto task = task_of(12, 20);
  const auto a = make_splits(task, 4, 0.25, 5);
  const auto b = make_splits(task, 4, 0.25, 5);
  const auto c = make_splits(task, 4, 0.25, 6);
  for (std::size_t p = 0; p < 4; ++p) {
    EXPECT_EQ(a[p].train_l, b[p].train_l);
    EXPECT_EQ(a[p].test, b[p].test);
  }
  EXPECT_NE(a[0].train_l, c[0].train_l);
}

TEST(Splits, TinyClassFails) {
  EXPECT_THROW(make_splits(task_of(1, 10), 1, 0.25, 1), InvalidArgument);
  EXPECT_THROW(make_splits(task_of(5, 5), 0, 0.25, 1), InvalidArgument);
}

TEST(Splits, LabeledSubsampleKeepsBothSides) {
  const auto task = task_of(30, 30);
  const auto split = make_splits(task, 1, 0.25, 3).front();
  const auto sub = subsample_labeled(split, task, 10, 3);
  EXPECT_EQ(sub.train_l.size(), 10u);
  EXPECT_EQ(sub.test, split.test);
  std::size_t pos = 0;
  for (std::size_t i : sub.train_l) {
    pos += task.labels[i] == Label::positive ? 1 : 0;
    EXPECT_TRUE(std::binary_search(split.train_l.begin(), split.train_l.end(), i));
  }
  EXPECT_EQ(pos, 5u);
}

TEST(Aggregate, Examples) {
  const std::vector<double> same{0.7, 0.7, 0.7};
  EXPECT_EQ(aggregate(same).std_percent, 0.0);
  const std::vector<double> two{0.8, 1.0};
  EXPECT_NEAR(aggregate(two).mean_percent, 90.0, 1e-12);
  EXPECT_NEAR(aggregate(two).std_percent, 14.142135623730951, 1e-9);
  const std::vector<double> one{0.6};
  EXPECT_EQ(aggregate(one).std_percent, 0.0);
}

TEST(Aggregate, MatchesStatisticsOracle) {
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) v.push_back(0.5 + 0.013 * i + 0.004 * (i % 3));
  const auto s = aggregate(v);
  EXPECT_NEAR(s.mean_percent, 62.73, 1e-10);
  EXPECT_NEAR(s.std_percent, 7.710423566766443, 1e-10);
}

}  // namespace
}  // namespace sfm
