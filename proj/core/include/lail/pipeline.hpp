#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lail/corpus.hpp"
#include "lail/evaluation.hpp"
#include "lail/gateway.hpp"
#include "lail/labeling.hpp"
#include "lail/retriever.hpp"
#include "lail/selection.hpp"

namespace lail {

enum class VerdictProvider { external_file, subprocess_runner };

struct VerdictConfig {
  VerdictProvider provider = VerdictProvider::external_file;
  /// External verdict file per strategy, relative to the output directory;
  /// "{strategy}" is replaced by the strategy name.
  std::string path = "verdicts_{strategy}.jsonl";
  RunnerConfig runner;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "lail-out";
  DatasetSource dataset;
  ProviderConfig scorer;
  ProviderConfig generator;
  ProviderConfig embedder;
  LabelingConfig label;
  TrainConfig train;
  std::size_t r = 3;
  ShotOrder shot_order = ShotOrder::ascending;
  std::vector<Strategy> strategies = {Strategy::random, Strategy::bm25, Strategy::embed_topk,
                                      Strategy::uncertainty, Strategy::lail};
  std::vector<std::size_t> ks = {1, 3, 5};
  GenerationParams generation;
  VerdictConfig verdicts;
  std::string baseline = "random";
  /// Test items generated concurrently; 0 uses the generator's concurrency.
  std::size_t workers = 0;
  /// Repetition index; re-randomizes sampling only.
  std::uint64_t run = 0;

  /// Throws ConfigError on any inconsistency (e.g. k above n_samples).
  void validate() const;
};

/// Parses a configuration document. Relative paths resolve against `base_dir`.
/// `overrides` are "dotted.key=value" assignments applied before parsing; the
/// value is read as JSON when it parses, otherwise as a string.
PipelineConfig parse_pipeline_config(std::string_view json_text,
                                     const std::filesystem::path& base_dir,
                                     std::span<const std::string> overrides = {});

PipelineConfig load_pipeline_config(const std::filesystem::path& path,
                                    std::span<const std::string> overrides = {});

/// Output file names inside the output directory.
namespace artifact {
inline constexpr std::string_view kManifest = "stages.json";
inline constexpr std::string_view kLabels = "labels.jsonl";
inline constexpr std::string_view kEmbeddings = "embeddings.jsonl";
inline constexpr std::string_view kCheckpoint = "checkpoint.json";
inline constexpr std::string_view kIndex = "index.jsonl";
inline constexpr std::string_view kComparison = "comparison.json";
std::string selections(Strategy strategy);
std::string samples(Strategy strategy);
std::string verdicts(Strategy strategy);
std::string report(Strategy strategy);
}  // namespace artifact

void write_index(const std::filesystem::path& path, const EmbeddingIndex& index,
                 const Provenance& provenance);
EmbeddingIndex read_index(const std::filesystem::path& path);

/// Process exit statuses of run_command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitMissingArtifact = 2;
inline constexpr int kExitProvider = 3;

/// Runs `lail <subcommand> --config <path> [options]`; `args` excludes the
/// program name. Reports go to `out`, diagnostics and usage to `err`.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace lail
