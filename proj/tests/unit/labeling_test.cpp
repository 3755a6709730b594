#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>

#include "lail/error.hpp"
#include "lail/labeling.hpp"
#include "lail/prompt.hpp"
#include "lail/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lail;
using lail::testing::TempDir;

namespace {

class FixedScorer final : public Scorer {
 public:
  explicit FixedScorer(std::vector<double> logprobs) : logprobs_(std::move(logprobs)) {}
  ScoreResult score_continuation(std::string_view, std::string_view) const override {
    return {logprobs_};
  }
  std::string describe() const override { return "fixed"; }

 private:
  std::vector<double> logprobs_;
};

/// Mock scorer that fails for one candidate code.
class FlakyScorer final : public Scorer {
 public:
  explicit FlakyScorer(std::string poison) : poison_(std::move(poison)) {}
  ScoreResult score_continuation(std::string_view prompt, std::string_view continuation) const override {
    const auto parsed = parse_prompt(prompt);
    if (parsed && !parsed->shots.empty() && parsed->shots.back().code == poison_) {
      throw TransportError("HTTP 503");
    }
    return inner_.score_continuation(prompt, continuation);
  }
  std::string describe() const override { return "flaky"; }

 private:
  MockScorer inner_;
  std::string poison_;
};

class FixedGenerator final : public Generator {
 public:
  explicit FixedGenerator(std::string program) : program_(std::move(program)) {}
  std::vector<std::string> generate(std::string_view, const GenerationParams& p) const override {
    return std::vector<std::string>(static_cast<std::size_t>(p.n_samples), program_);
  }
  std::string describe() const override { return "fixed"; }

 private:
  std::string program_;
};

std::vector<ScoredCandidate> scored(const std::vector<std::pair<std::string, double>>& items) {
  std::vector<ScoredCandidate> out;
  for (const auto& [id, s] : items) out.push_back({id, s, ScorerKind::probability});
  return out;
}

std::vector<std::string> ids_of(const std::vector<ScoredCandidate>& items) {
  std::vector<std::string> out;
  for (const auto& c : items) out.push_back(c.candidate_id);
  return out;
}

std::vector<Example> small_pool(std::size_t n, std::uint64_t seed = 2) {
  SyntheticSpec spec;
  spec.clusters = 4;
  spec.train_size = n;
  spec.test_size = 0;
  spec.noise_vocabulary = 20;
  spec.noise_per_requirement = 4;
  spec.code_noise_operations = 2;
  spec.seed = seed;
  return make_synthetic_corpus(spec).dataset.train;
}

}  // namespace

TEST(MetricM, MeanOfTokenLogprobs) {
  const Example anchor{"a", "req", "code", {}};
  const Example candidate{"c", "req2", "code2", {}};
  EXPECT_DOUBLE_EQ(metric_m(anchor, candidate, FixedScorer({0.0, 0.0, 0.0})), 0.0);
  EXPECT_NEAR(metric_m(anchor, candidate, FixedScorer({std::log(0.5), std::log(0.5)})),
              -0.6931471805599453, 1e-15);
}

TEST(MetricM, MockScorerHalfJaccard) {
  // Token sets {a, b, c} and {b, c, d}: Jaccard 2/4.
  const Example anchor{"a", "req", "a b c", {}};
  const Example candidate{"c", "req2", "b c d", {}};
  EXPECT_NEAR(metric_m(anchor, candidate, MockScorer(0.01)), std::log(0.505), 1e-12);
  EXPECT_NEAR(std::log(0.505), -0.683197, 1e-6);
}

TEST(Bleu, IdentityAndDisjoint) {
  const auto ref = tokenize("def f ( x ) : return x + 1");
  EXPECT_DOUBLE_EQ(bleu4(ref, ref), 1.0);
  const auto other = tokenize("while true do nothing forever");
  const double floor_value = bleu4(other, ref);
  EXPECT_LT(floor_value, 1e-8);
  EXPECT_NEAR(floor_value, oracle::bleu(other, ref), 1e-18);
}

TEST(Bleu, ShortHypothesisMatchesOracle) {
  const std::vector<std::string> hyp = {"a", "b", "c", "d"};
  const std::vector<std::string> ref = {"a", "b", "c", "d", "e"};
  EXPECT_NEAR(bleu4(hyp, ref), std::exp(1.0 - 5.0 / 4.0), 1e-6);
  EXPECT_NEAR(bleu4(hyp, ref), oracle::bleu(hyp, ref), 1e-12);
}

TEST(Bleu, RandomizedAgainstOracle) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::string> hyp(1 + rng() % 12);
    std::vector<std::string> ref(1 + rng() % 12);
    for (auto& w : hyp) w = std::string(1, static_cast<char>('a' + rng() % 4));
    for (auto& w : ref) w = std::string(1, static_cast<char>('a' + rng() % 4));
    const double expected = oracle::bleu(hyp, ref);
    EXPECT_NEAR(bleu4(hyp, ref), expected, 1e-6 * std::max(1.0, expected));
    EXPECT_GE(bleu4(hyp, ref), 0.0);
    EXPECT_LE(bleu4(hyp, ref), 1.0 + 1e-12);
  }
}

TEST(MatchBleu, UsesGreedyGeneration) {
  const Example anchor{"a", "req", "return x + 1", {}};
  const Example candidate{"c", "req2", "whatever", {}};
  EXPECT_DOUBLE_EQ(match_bleu(anchor, candidate, FixedGenerator("return x + 1")), 1.0);
  EXPECT_LT(match_bleu(anchor, candidate, FixedGenerator("pass pass pass pass pass")), 1e-8);
}

TEST(LabelAnchor, SplitsByScore) {
  const auto items = scored({{"c1", -0.1}, {"c2", -0.2}, {"c3", -0.3},
                             {"c4", -0.4}, {"c5", -0.5}, {"c6", -0.6}});
  const std::vector<std::string> stage_one = {"c1", "c2", "c3", "c4", "c5", "c6"};
  const auto labeled = label_anchor("a", stage_one, items, 2, 2);
  EXPECT_EQ(ids_of(labeled.positives), (std::vector<std::string>{"c1", "c2"}));
  EXPECT_EQ(ids_of(labeled.negatives), (std::vector<std::string>{"c5", "c6"}));
}

TEST(LabelAnchor, EqualScoresFollowIdOrder) {
  const auto items = scored({{"d", -1}, {"b", -1}, {"a", -1}, {"c", -1}, {"e", -1}});
  const std::vector<std::string> stage_one = {"a", "b", "c", "d", "e"};
  const auto labeled = label_anchor("x", stage_one, items, 2, 2);
  EXPECT_EQ(ids_of(labeled.positives), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ids_of(labeled.negatives), (std::vector<std::string>{"d", "e"}));
}

TEST(LabelAnchor, DefaultSizesAndErrors) {
  std::vector<std::pair<std::string, double>> items;
  std::vector<std::string> stage_one;
  for (int i = 0; i < 50; ++i) {
    items.push_back({"c" + std::to_string(100 + i), -0.01 * i});
    stage_one.push_back("c" + std::to_string(100 + i));
  }
  const auto labeled = label_anchor("a", stage_one, scored(items), 5, 5);
  EXPECT_EQ(labeled.positives.size(), 5u);
  EXPECT_EQ(labeled.negatives.size(), 5u);
  EXPECT_THROW(label_anchor("a", stage_one, scored(items), 30, 30), InvalidArgument);
  EXPECT_THROW(label_anchor("a", stage_one, scored(items), 0, 5), InvalidArgument);
}

TEST(BuildLabeledDataset, SmallPoolClampsStageOne) {
  const auto pool = small_pool(8);
  MockScorer scorer;
  LabelingConfig config;
  config.t = 50;
  config.z = 2;
  config.v = 2;
  const auto report = build_labeled_dataset(pool, config, {&scorer, nullptr});
  ASSERT_EQ(report.anchors.size(), 8u);
  EXPECT_EQ(report.scorer_calls, 8u * 7u);
  for (const auto& anchor : report.anchors) {
    EXPECT_EQ(anchor.stage_one_ids.size(), 7u);
    EXPECT_EQ(std::count(anchor.stage_one_ids.begin(), anchor.stage_one_ids.end(), anchor.anchor_id), 0);
  }
}

TEST(BuildLabeledDataset, PositivesAreBruteForceJaccardTop) {
  const auto pool = small_pool(30);
  const ExampleLookup lookup(pool);
  MockScorer scorer;
  LabelingConfig config;
  config.t = 10;
  config.z = 3;
  config.v = 3;
  config.workers = 3;
  const auto report = build_labeled_dataset(pool, config, {&scorer, nullptr});
  for (const auto& anchor : report.anchors) {
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& id : anchor.stage_one_ids) {
      ranked.push_back({-oracle::jaccard(lookup.at(id).code, lookup.at(anchor.anchor_id).code), id});
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<std::string> expected;
    for (std::size_t i = 0; i < config.z; ++i) expected.push_back(ranked[i].second);
    EXPECT_EQ(ids_of(anchor.positives), expected) << anchor.anchor_id;
    EXPECT_GE(anchor.positives.back().score, anchor.negatives.front().score);
  }
}

TEST(BuildLabeledDataset, FileIsByteIdenticalAcrossRunsAndWorkerCounts) {
  const auto pool = small_pool(20);
  MockScorer scorer;
  LabelingConfig config;
  config.t = 8;
  config.z = 2;
  config.v = 2;
  TempDir dir;
  config.workers = 1;
  build_labeled_dataset(pool, config, {&scorer, nullptr}, LabelsFile{dir / "a.jsonl", "h", "v"});
  config.workers = 4;
  build_labeled_dataset(pool, config, {&scorer, nullptr}, LabelsFile{dir / "b.jsonl", "h", "v"});
  EXPECT_EQ(lail::testing::read_text(dir / "a.jsonl"), lail::testing::read_text(dir / "b.jsonl"));
  EXPECT_EQ(read_labels(dir / "a.jsonl").size(), 20u);
}

TEST(BuildLabeledDataset, ResumesAfterInterruption) {
  const auto pool = small_pool(20);
  MockScorer scorer;
  LabelingConfig config;
  config.t = 8;
  config.z = 2;
  config.v = 2;
  TempDir dir;
  const LabelsFile file{dir / "labels.jsonl", "h1", "v"};
  build_labeled_dataset(pool, config, {&scorer, nullptr}, file);
  const std::string complete = lail::testing::read_text(file.path);

  // Keep the header and five anchors, then a torn half line.
  std::size_t cut = 0;
  for (int lines = 0; lines < 6; ++lines) cut = complete.find('\n', cut) + 1;
  lail::testing::write_text(file.path, complete.substr(0, cut) + complete.substr(cut, 17));
  const auto report = build_labeled_dataset(pool, config, {&scorer, nullptr}, file);
  EXPECT_EQ(report.resumed_anchors, 5u);
  EXPECT_EQ(report.scorer_calls, 15u * 8u);
  EXPECT_EQ(lail::testing::read_text(file.path), complete);

  // A different configuration hash restarts from scratch.
  const auto fresh = build_labeled_dataset(pool, config, {&scorer, nullptr},
                                           LabelsFile{file.path, "h2", "v"});
  EXPECT_EQ(fresh.resumed_anchors, 0u);
}

TEST(BuildLabeledDataset, FailedCandidatesAreExcluded) {
  auto pool = small_pool(6);
  const FlakyScorer scorer(pool[0].code);
  LabelingConfig config;
  config.t = 5;
  config.z = 2;
  config.v = 3;
  const auto report = build_labeled_dataset(pool, config, {&scorer, nullptr});
  // Every other anchor loses candidate 0 and keeps 4 < z + v scored candidates.
  EXPECT_EQ(report.failures.size(), 5u);
  EXPECT_EQ(report.dropped_anchors.size(), 5u);
  ASSERT_EQ(report.anchors.size(), 1u);
  EXPECT_EQ(report.anchors[0].anchor_id, pool[0].id);
}

TEST(LabelsFile, JsonLineRoundTrip) {
  LabeledAnchor anchor{"a", ScorerKind::match_bleu, {"x", "y", "z"},
                       {{"x", 0.75, ScorerKind::match_bleu}}, {{"z", 0.125, ScorerKind::match_bleu}}};
  const std::string line = labeled_anchor_to_json_line(anchor);
  EXPECT_NE(line.find("\"stage_one\""), std::string::npos);
  EXPECT_EQ(labeled_anchor_from_json_line(line), anchor);
}
