#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lail/corpus.hpp"
#include "lail/gateway.hpp"
#include "lail/lexical.hpp"
#include "lail/prompt.hpp"
#include "lail/retriever.hpp"

namespace lail {

enum class Strategy { random, bm25, embed_topk, uncertainty, lail };

std::string_view to_string(Strategy strategy);
Strategy strategy_from_string(std::string_view name);

/// Shot order in the rendered prompt. Ascending puts the most similar shot
/// right before the test requirement.
enum class ShotOrder { ascending, descending };

std::string_view to_string(ShotOrder order);
ShotOrder shot_order_from_string(std::string_view name);

/// Pool requirements encoded once; rows are unit vectors or flagged zero.
struct EmbeddingIndex {
  std::vector<std::string> ids;
  Matrix vectors;  // N x d
  std::vector<bool> zero_rows;
  /// Checkpoint fingerprint, or "raw:<embedder fingerprint>" for unprojected rows.
  std::string checkpoint_fingerprint;

  std::size_t size() const { return ids.size(); }
};

/// Rows are encode(head, raw) for a head, or raw / |raw| without one.
EmbeddingIndex index_from_embeddings(std::vector<std::string> ids, std::span<const Vector> raw,
                                     const ProjectionHead* head, std::string fingerprint);

/// Encodes every pool requirement with the checkpoint's head, in pool order.
/// Throws InvalidArgument on an embedder fingerprint mismatch unless `force`.
EmbeddingIndex build_embedding_index(std::span<const Example> pool, const Embedder& embedder,
                                     const RetrieverCheckpoint& checkpoint, bool force = false,
                                     EmbeddingCache* cache = nullptr);

/// Normalized raw embeddings; backs the embed_topk baseline.
EmbeddingIndex build_raw_index(std::span<const Example> pool, const Embedder& embedder,
                               EmbeddingCache* cache = nullptr);

/// Top-r rows by cosine similarity to `query` (already unit or zero),
/// descending, ties by id ascending. r larger than the index is clamped.
std::vector<RankedId> retrieve_by_vector(const EmbeddingIndex& index, const Vector& query,
                                         std::size_t r);

/// Embeds and encodes `test_requirement`, then ranks the index against it.
std::vector<RankedId> retrieve(const EmbeddingIndex& index, std::string_view test_requirement,
                               std::size_t r, const RetrieverCheckpoint& checkpoint,
                               const Embedder& embedder);

/// What each baseline needs; only the fields of the requested strategy are read.
struct SelectionContext {
  std::uint64_t seed = 0;
  /// Keys the random draw, normally the test id.
  std::string random_key;
  const Bm25Index* bm25 = nullptr;
  const EmbeddingIndex* raw_index = nullptr;
  const Embedder* embedder = nullptr;
  /// Output of uncertainty_ranking; reused for every test requirement.
  const std::vector<RankedId>* uncertainty = nullptr;
};

/// The `r` pool examples the model is least sure about: lowest zero-shot mean
/// log-probability of their own program given their own requirement. Scores
/// are the negated mean log-probability.
std::vector<RankedId> uncertainty_ranking(std::span<const Example> pool, const Scorer& scorer,
                                          std::size_t r);

/// random, bm25, embed_topk or uncertainty selection of `r` distinct pool ids.
/// Throws InvalidArgument when the strategy's context is missing, or for lail
/// (which needs a checkpoint; use retrieve).
std::vector<RankedId> select_baseline(Strategy strategy, std::span<const Example> pool,
                                      std::string_view test_requirement, std::size_t r,
                                      const SelectionContext& context);

/// Orders shots by similarity (ties broken as in ranking) and renders them
/// followed by the test requirement. Throws InvalidArgument for no shots or an
/// unknown id.
Prompt assemble_prompt(std::span<const RankedId> shots, const ExampleLookup& pool,
                       std::string_view test_requirement, ShotOrder order = ShotOrder::ascending);

/// One test item's chosen shots.
struct Selection {
  std::string test_id;
  std::string strategy;
  std::vector<RankedId> shots;

  bool operator==(const Selection&) const = default;
};

std::string selection_to_json_line(const Selection& selection);
std::vector<Selection> read_selections(const std::filesystem::path& path);

}  // namespace lail
