#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <random>

#include "lail/error.hpp"
#include "lail/evaluation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lail;

namespace {

VerdictMatrix matrix(std::vector<std::vector<bool>> rows) {
  VerdictMatrix m;
  for (std::size_t i = 0; i < rows.size(); ++i) m.rows["t" + std::to_string(i)] = rows[i];
  return m;
}

class CountingGenerator final : public Generator {
 public:
  std::vector<std::string> generate(std::string_view prompt,
                                    const GenerationParams& params) const override {
    ++calls;
    return inner.generate(prompt, params);
  }
  std::string describe() const override { return "counting"; }
  MockGenerator inner;
  mutable std::atomic<int> calls{0};
};

class FailingGenerator final : public Generator {
 public:
  std::vector<std::string> generate(std::string_view prompt,
                                    const GenerationParams& params) const override {
    if (prompt.find("bad") != std::string_view::npos) throw ProviderError("boom");
    return MockGenerator().generate(prompt, params);
  }
  std::string describe() const override { return "failing"; }
};

struct Fixture {
  std::vector<Example> pool = {{"p0", "sort a list", "sorted(x)", {}},
                               {"p1", "reverse a string", "x[::-1]", {}},
                               {"p2", "sum numbers", "sum(x)", {}}};
  std::vector<Example> tests = {{"q0", "sort a list please", "sorted(x)", {"assert True"}},
                                {"q1", "reverse a string now", "x[::-1]", {"assert True"}},
                                {"q2", "sum numbers fast", "sum(x)", {"assert True"}},
                                {"q3", "nothing shared", "pass", {"assert True"}}};
  ShotSelector all_shots = [](const Example&) {
    return std::vector<RankedId>{{"p0", 0.3}, {"p1", 0.2}, {"p2", 0.1}};
  };
};

GenerationOptions options(std::size_t n) {
  GenerationOptions o;
  o.params.n_samples = n;
  o.params.temperature = 0.8;
  o.workers = 2;
  return o;
}

}  // namespace

TEST(PassAtK, WorkedExample) {
  const auto m = matrix({{true, false}, {false, true}, {false, false}, {true, true}});
  EXPECT_DOUBLE_EQ(pass_at_k(m, 1), 0.5);
  EXPECT_DOUBLE_EQ(pass_at_k(m, 2), 0.75);
  EXPECT_THROW(pass_at_k(m, 0), InvalidArgument);
  EXPECT_THROW(pass_at_k(m, 3), InvalidArgument);
}

TEST(PassAtK, MonotoneAndMatchesOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<bool>> rows(1 + rng() % 10);
    for (auto& row : rows) {
      row.resize(5);
      for (std::size_t j = 0; j < 5; ++j) row[j] = rng() % 4 == 0;
    }
    const auto m = matrix(rows);
    double previous = 0;
    for (std::size_t k = 1; k <= 5; ++k) {
      const double value = pass_at_k(m, k);
      EXPECT_DOUBLE_EQ(value, oracle::pass_at(rows, k));
      EXPECT_GE(value, previous);
      EXPECT_GE(value, 0.0);
      EXPECT_LE(value, 1.0);
      previous = value;
    }
  }
}

TEST(Generation, ProducesEverySampleWithMockIdentity) {
  Fixture f;
  const ExampleLookup pool(f.pool);
  const MockGenerator generator;
  const auto run = run_generation(f.tests, "lail", f.all_shots, pool, generator, options(5));
  ASSERT_EQ(run.records.size(), 20u);
  EXPECT_TRUE(run.failures.empty());
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    EXPECT_EQ(run.records[i].test_id, f.tests[i / 5].id);
    EXPECT_EQ(run.records[i].sample_index, i % 5);
  }
  EXPECT_EQ(run.records[0].program, "sorted(x)");
  EXPECT_EQ(run.records[5].program, "x[::-1]");
  EXPECT_EQ(run.records[10].program, "sum(x)");
  const ExampleLookup tests(f.tests);
  const auto verdicts = exact_match_verdicts(run.records, tests);
  const auto report = make_report("lail", verdicts_for(run.records, verdicts),
                                  std::vector<std::size_t>{1, 5});
  EXPECT_DOUBLE_EQ(report.pass_at.at(1), 0.75);
}

TEST(Generation, ResumesAfterTornFile) {
  Fixture f;
  const ExampleLookup pool(f.pool);
  lail::testing::TempDir dir;
  const SamplesFile file{dir / "samples.jsonl", "hash-a", "test"};
  CountingGenerator first;
  const auto full = run_generation(f.tests, "lail", f.all_shots, pool, first, options(5), file);
  EXPECT_EQ(first.calls.load(), 4);

  // Keep the metadata line, the first two tests, and half a line of the third.
  const std::string text = lail::testing::read_text(file.path);
  std::size_t cut = 0;
  for (int lines = 0; lines < 11; ++lines) cut = text.find('\n', cut) + 1;
  lail::testing::write_text(file.path, text.substr(0, cut + 10));

  CountingGenerator second;
  const auto resumed = run_generation(f.tests, "lail", f.all_shots, pool, second, options(5), file);
  EXPECT_EQ(resumed.resumed_tests, 2u);
  EXPECT_EQ(second.calls.load(), 2);
  EXPECT_EQ(resumed.records, full.records);
  EXPECT_EQ(read_samples(file.path), full.records);

  CountingGenerator third;
  const SamplesFile other{file.path, "hash-b", "test"};
  const auto restarted = run_generation(f.tests, "lail", f.all_shots, pool, third, options(5), other);
  EXPECT_EQ(restarted.resumed_tests, 0u);
  EXPECT_EQ(third.calls.load(), 4);
}

TEST(Generation, ProviderFailuresAreRecorded) {
  Fixture f;
  f.tests[2].requirement = "bad request";
  const ExampleLookup pool(f.pool);
  const FailingGenerator generator;
  const auto run = run_generation(f.tests, "lail", f.all_shots, pool, generator, options(2));
  ASSERT_EQ(run.failures.size(), 1u);
  EXPECT_EQ(run.failures[0].test_id, "q2");
  EXPECT_EQ(run.records.size(), 6u);
}

TEST(Verdicts, MissingVerdictNamesSample) {
  const std::vector<SampleRecord> records = {{"q0", "s", 0, "a"}, {"q0", "s", 1, "b"}};
  const std::vector<VerdictRecord> verdicts = {{"q0", 0, true, ""}};
  try {
    verdicts_for(records, verdicts);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("q0"), std::string::npos);
  }
}

TEST(Verdicts, FileRoundTrip) {
  lail::testing::TempDir dir;
  const std::vector<VerdictRecord> verdicts = {{"q0", 0, true, "passed"}, {"q1", 3, false, "timeout"}};
  write_verdicts(dir / "v.jsonl", verdicts);
  EXPECT_EQ(read_verdicts(dir / "v.jsonl"), verdicts);
}

TEST(Subprocess, RequiresAcknowledgement) {
  const std::vector<Example> tests = {{"q0", "r", "c", {"assert True"}}};
  const ExampleLookup lookup(tests);
  const std::vector<SampleRecord> records = {{"q0", "s", 0, "x = 1"}};
  RunnerConfig config;
  EXPECT_THROW(run_subprocess_verdicts(records, lookup, config), ConfigError);
}

TEST(Subprocess, PassFailAndTimeout) {
  const std::vector<Example> tests = {{"q0", "r", "c", {"assert f(2) == 4"}}};
  const ExampleLookup lookup(tests);
  const std::vector<SampleRecord> records = {
      {"q0", "s", 0, "def f(x):\n    return x * 2"},
      {"q0", "s", 1, "def f(x):\n    return x + 3"},
      {"q0", "s", 2, "import time\ntime.sleep(30)\ndef f(x):\n    return 4"}};
  RunnerConfig config;
  config.acknowledged_execution_risk = true;
  config.timeout = std::chrono::milliseconds(1000);
  const auto start = std::chrono::steady_clock::now();
  const auto verdicts = run_subprocess_verdicts(records, lookup, config);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  ASSERT_EQ(verdicts.size(), 3u);
  EXPECT_TRUE(verdicts[0].pass);
  EXPECT_EQ(verdicts[0].reason, "passed");
  EXPECT_FALSE(verdicts[1].pass);
  EXPECT_EQ(verdicts[1].reason, "nonzero exit");
  EXPECT_FALSE(verdicts[2].pass);
  EXPECT_EQ(verdicts[2].reason, "timeout");
  EXPECT_LT(elapsed, std::chrono::milliseconds(2000));
}

TEST(Subprocess, MissingInterpreterIsConfigError) {
  const std::vector<Example> tests = {{"q0", "r", "c", {"assert True"}}};
  const ExampleLookup lookup(tests);
  const std::vector<SampleRecord> records = {{"q0", "s", 0, "x = 1"}};
  RunnerConfig config;
  config.acknowledged_execution_risk = true;
  config.command = {"/nonexistent/interpreter"};
  EXPECT_THROW(run_subprocess_verdicts(records, lookup, config), ConfigError);
}

TEST(Compare, SingleReportAndRelativeImprovement) {
  EvalReport random;
  random.strategy = "random";
  random.n_test = 4;
  random.pass_at = {{1, 0.4}};
  const std::vector<EvalReport> one = {random};
  const auto single = compare_report(one);
  EXPECT_NE(single.table.find("random"), std::string::npos);
  EXPECT_TRUE(single.warnings.empty());

  EvalReport lail = random;
  lail.strategy = "lail";
  lail.pass_at = {{1, 0.5}};
  const std::vector<EvalReport> two = {random, lail};
  const auto doc = compare_report(two);
  EXPECT_NE(doc.table.find("25.00%"), std::string::npos);
  EXPECT_NE(doc.table.find("0.5000"), std::string::npos);
}

TEST(Compare, FlagsNonMonotoneAndMismatchedTestSets) {
  EvalReport a;
  a.strategy = "random";
  a.pass_at = {{1, 0.6}, {3, 0.5}};
  a.test_ids = {"q0"};
  EvalReport b;
  b.strategy = "lail";
  b.pass_at = {{1, 0.2}, {3, 0.5}};
  b.test_ids = {"q1"};
  const std::vector<EvalReport> reports = {a, b};
  const auto doc = compare_report(reports);
  ASSERT_EQ(doc.warnings.size(), 2u);
  EXPECT_NE(doc.warnings[0].find("Pass@1 > Pass@3"), std::string::npos);
  EXPECT_NE(doc.warnings[1].find("differs"), std::string::npos);
}

TEST(Reports, JsonRoundTripAndAverage) {
  EvalReport a;
  a.strategy = "lail";
  a.n_test = 2;
  a.test_ids = {"q0", "q1"};
  a.pass_at = {{1, 0.5}, {3, 1.0}};
  a.config_hash = "abc";
  const auto back = report_from_json(report_to_json(a));
  EXPECT_EQ(back.pass_at, a.pass_at);
  EXPECT_EQ(back.test_ids, a.test_ids);
  EXPECT_EQ(back.config_hash, "abc");
  EvalReport b = a;
  b.pass_at = {{1, 0.0}, {3, 0.5}};
  const std::vector<EvalReport> runs = {a, b};
  const auto mean = average_reports(runs);
  EXPECT_DOUBLE_EQ(mean.pass_at.at(1), 0.25);
  EXPECT_DOUBLE_EQ(mean.pass_at.at(3), 0.75);
}
