#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lail/corpus.hpp"
#include "lail/gateway.hpp"
#include "lail/lexical.hpp"

namespace lail {

/// Which estimate ranks stage-one candidates.
enum class ScorerKind { probability, match_bleu };

std::string_view to_string(ScorerKind kind);
ScorerKind scorer_kind_from_string(std::string_view name);

struct ScoredCandidate {
  std::string candidate_id;
  double score = 0.0;
  ScorerKind scorer_kind = ScorerKind::probability;

  bool operator==(const ScoredCandidate&) const = default;
};

/// An anchor with its stage-one set and the positive/negative sets cut from it.
struct LabeledAnchor {
  std::string anchor_id;
  ScorerKind scorer_kind = ScorerKind::probability;
  std::vector<std::string> stage_one_ids;
  std::vector<ScoredCandidate> positives;
  std::vector<ScoredCandidate> negatives;

  bool operator==(const LabeledAnchor&) const = default;
};

/// Length-normalized log-probability of the anchor's program given a one-shot
/// prompt holding the candidate and the anchor's requirement. Provider errors
/// propagate.
double metric_m(const Example& anchor, const Example& candidate, const Scorer& scorer);

/// Smoothed sentence BLEU-4: geometric mean of clipped n-gram precisions
/// (n = 1..4), each (matches + eps) / (hypothesis n-grams + eps), times the
/// brevity penalty min(1, exp(1 - |ref| / |hyp|)). An empty hypothesis scores 0
/// unless the reference is empty too.
double bleu4(std::span<const std::string> hypothesis, std::span<const std::string> reference,
             double smoothing = 1e-9);

/// BLEU-4 between a greedy (temperature 0) one-shot generation and the anchor's
/// program, both tokenized with lexical::tokenize.
double match_bleu(const Example& anchor, const Example& candidate, const Generator& generator);

/// Sorts `scored` by score descending (ties by id ascending) and takes the
/// first z as positives and the last v as negatives.
/// Throws InvalidArgument unless 1 <= z, 1 <= v and z + v <= |scored|.
LabeledAnchor label_anchor(std::string_view anchor_id, std::span<const std::string> stage_one_ids,
                           std::span<const ScoredCandidate> scored, std::size_t z, std::size_t v);

struct LabelingConfig {
  std::size_t t = 50;
  std::size_t z = 5;
  std::size_t v = 5;
  ScorerKind scorer_kind = ScorerKind::probability;
  Bm25Params bm25;
  /// Anchors scored concurrently; 0 uses the provider's concurrency.
  std::size_t workers = 0;
};

/// The providers a labeling run may use; the one matching scorer_kind must be set.
struct LabelingProviders {
  const Scorer* scorer = nullptr;
  const Generator* generator = nullptr;
};

/// Append-structured labels file. Records are keyed by anchor id; a run that
/// finds a file carrying the same `config_hash` skips the anchors it holds.
struct LabelsFile {
  std::filesystem::path path;
  std::string config_hash;
  std::string tool_version;
};

struct CandidateFailure {
  std::string anchor_id;
  std::string candidate_id;
  std::string message;
};

struct LabelingReport {
  /// Every labeled anchor, in pool order (resumed ones included).
  std::vector<LabeledAnchor> anchors;
  /// Anchors left with fewer than z + v scored candidates.
  std::vector<std::string> dropped_anchors;
  std::vector<CandidateFailure> failures;
  std::size_t scorer_calls = 0;
  std::size_t resumed_anchors = 0;
};

/// Labels every pool example: BM25 stage one over requirements (anchor
/// excluded), then the chosen estimate for each stage-one candidate, then
/// label_anchor. Output order and file bytes do not depend on concurrency.
LabelingReport build_labeled_dataset(std::span<const Example> pool, const LabelingConfig& config,
                                     LabelingProviders providers,
                                     const std::optional<LabelsFile>& file = std::nullopt);

std::string labeled_anchor_to_json_line(const LabeledAnchor& anchor);
LabeledAnchor labeled_anchor_from_json_line(std::string_view line);

/// Reads a labels file, skipping provenance lines.
std::vector<LabeledAnchor> read_labels(const std::filesystem::path& path);

}  // namespace lail
