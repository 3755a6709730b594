#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lail/corpus.hpp"
#include "lail/gateway.hpp"
#include "lail/lexical.hpp"
#include "lail/selection.hpp"
#include "lail/version.hpp"

namespace lail {

struct SampleRecord {
  std::string test_id;
  std::string strategy;
  std::size_t sample_index = 0;
  std::string program;

  bool operator==(const SampleRecord&) const = default;
};

/// Pass/fail per test id, one entry per sample in sample order.
struct VerdictMatrix {
  std::map<std::string, std::vector<bool>> rows;
};

/// One executed (or externally judged) sample.
struct VerdictRecord {
  std::string test_id;
  std::size_t sample_index = 0;
  bool pass = false;
  std::string reason;

  bool operator==(const VerdictRecord&) const = default;
};

struct EvalReport {
  std::string strategy;
  std::map<std::size_t, double> pass_at;
  std::size_t n_test = 0;
  std::vector<std::string> test_ids;
  /// Configuration snapshot as compact JSON text.
  std::string config = "{}";
  std::string config_hash;
  std::string tool_version;
};

/// Shots for one test item.
using ShotSelector = std::function<std::vector<RankedId>(const Example& test)>;

struct GenerationFailure {
  std::string test_id;
  std::string message;
};

struct GenerationRun {
  std::vector<SampleRecord> records;
  std::vector<GenerationFailure> failures;
  std::size_t resumed_tests = 0;
};

/// Incrementally written samples file. A rerun that finds the same
/// `config_hash` keeps every test id whose samples are all present.
struct SamplesFile {
  std::filesystem::path path;
  std::string config_hash;
  std::string tool_version;
};

struct GenerationOptions {
  GenerationParams params;
  ShotOrder shot_order = ShotOrder::ascending;
  /// Test items generated concurrently; 0 uses the generator's concurrency.
  std::size_t workers = 0;
};

/// For each test item: select shots, assemble the prompt, sample
/// params.n_samples programs. Provider errors are recorded per test id and the
/// run continues. Records come back in test-set order.
GenerationRun run_generation(std::span<const Example> testset, std::string_view strategy,
                             const ShotSelector& selector, const ExampleLookup& pool,
                             const Generator& generator, const GenerationOptions& options,
                             const std::optional<SamplesFile>& file = std::nullopt);

/// Fraction of test ids where any of the first k samples passed.
/// Throws InvalidArgument when k is 0 or exceeds a row's length.
double pass_at_k(const VerdictMatrix& verdicts, std::size_t k);

/// Pass@k for each k in `ks`.
EvalReport make_report(std::string strategy, const VerdictMatrix& verdicts,
                       std::span<const std::size_t> ks, std::string config_snapshot = "{}");

/// Shapes verdict records into a matrix covering exactly `records`.
/// Throws DataError naming the first (test_id, sample_index) without a verdict.
VerdictMatrix verdicts_for(std::span<const SampleRecord> records,
                           std::span<const VerdictRecord> verdicts);

/// How subprocess verdicts are produced.
struct RunnerConfig {
  /// Interpreter argv; the program file path is appended.
  std::vector<std::string> command = {"python3"};
  std::chrono::milliseconds timeout{10'000};
  std::size_t max_processes = 4;
  std::string file_suffix = ".py";
  /// Must be set: the runner executes untrusted generated code.
  bool acknowledged_execution_risk = false;
};

/// Writes program + "\n" + the test statements (one per line) to a temp file,
/// runs `command <file>`, and passes iff the exit status is 0 within the
/// timeout. Reasons: "passed", "nonzero exit", "timeout", "signal",
/// "no tests". Throws ConfigError without the risk acknowledgement or when the
/// interpreter cannot be found.
std::vector<VerdictRecord> run_subprocess_verdicts(std::span<const SampleRecord> records,
                                                   const ExampleLookup& tests,
                                                   const RunnerConfig& config);

/// Aligned Pass@k table with relative improvement over a named baseline.
struct ComparisonDocument {
  std::string table;
  std::string json;
  /// Mismatched test sets and non-monotone Pass@k columns.
  std::vector<std::string> warnings;
};

ComparisonDocument compare_report(std::span<const EvalReport> reports,
                                  std::string_view baseline = "random");

/// Mean Pass@k over repeated runs of one strategy (same test set and ks).
EvalReport average_reports(std::span<const EvalReport> runs);

std::string sample_to_json_line(const SampleRecord& record);
std::vector<SampleRecord> read_samples(const std::filesystem::path& path);
std::string verdict_to_json_line(const VerdictRecord& verdict);
std::vector<VerdictRecord> read_verdicts(const std::filesystem::path& path);
/// Writes a verdict file, preceded by a provenance line when one is given.
void write_verdicts(const std::filesystem::path& path, std::span<const VerdictRecord> verdicts,
                    const std::optional<Provenance>& provenance = std::nullopt);

/// Verdicts that pass a sample iff its program equals the test item's
/// reference program byte for byte. Reasons: "exact match", "mismatch".
std::vector<VerdictRecord> exact_match_verdicts(std::span<const SampleRecord> records,
                                                const ExampleLookup& tests);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);

}  // namespace lail
