#include "lail/selection.hpp"

#include <algorithm>
#include <unordered_set>

#include "json_io.hpp"
#include "lail/error.hpp"
#include "lail/log.hpp"
#include "lail/random.hpp"

namespace lail {
namespace {

using detail::Json;

bool ranks_before(const RankedId& a, const RankedId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

std::size_t clamp_shots(std::size_t r, std::size_t available) {
  if (r == 0) throw InvalidArgument("shot count r must be at least 1");
  if (r > available) {
    log_warning("requested " + std::to_string(r) + " shots but only " + std::to_string(available) +
                " candidates exist; clamping");
    return available;
  }
  return r;
}

Vector unit_or_zero(const Vector& v) {
  const double norm = v.norm();
  return norm < kZeroNormThreshold ? Vector::Zero(v.size()) : Vector(v / norm);
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::random: return "random";
    case Strategy::bm25: return "bm25";
    case Strategy::embed_topk: return "embed_topk";
    case Strategy::uncertainty: return "uncertainty";
    case Strategy::lail: return "lail";
  }
  return "unknown";
}

Strategy strategy_from_string(std::string_view name) {
  if (name == "random") return Strategy::random;
  if (name == "bm25") return Strategy::bm25;
  if (name == "embed_topk") return Strategy::embed_topk;
  if (name == "uncertainty") return Strategy::uncertainty;
  if (name == "lail") return Strategy::lail;
  throw ConfigError("unknown strategy \"" + std::string(name) + "\"");
}

std::string_view to_string(ShotOrder order) {
  return order == ShotOrder::ascending ? "asc" : "desc";
}

ShotOrder shot_order_from_string(std::string_view name) {
  if (name == "asc") return ShotOrder::ascending;
  if (name == "desc") return ShotOrder::descending;
  throw ConfigError("shot order must be \"asc\" or \"desc\", got \"" + std::string(name) + "\"");
}

EmbeddingIndex index_from_embeddings(std::vector<std::string> ids, std::span<const Vector> raw,
                                     const ProjectionHead* head, std::string fingerprint) {
  if (ids.size() != raw.size()) throw InvalidArgument("index: ids and embeddings differ in length");
  EmbeddingIndex index;
  index.ids = std::move(ids);
  index.checkpoint_fingerprint = std::move(fingerprint);
  const Eigen::Index d = head != nullptr ? static_cast<Eigen::Index>(head->output_dim())
                                         : (raw.empty() ? 0 : raw.front().size());
  index.vectors.resize(static_cast<Eigen::Index>(raw.size()), d);
  index.zero_rows.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Encoding encoded;
    if (head != nullptr) {
      encoded = encode_flagged(*head, raw[i]);
    } else {
      if (raw[i].size() != d) throw InvalidArgument("index: inconsistent embedding dimensions");
      encoded.unit = unit_or_zero(raw[i]);
      encoded.zero = encoded.unit.isZero(0.0);
    }
    index.vectors.row(static_cast<Eigen::Index>(i)) = encoded.unit.transpose();
    index.zero_rows[i] = encoded.zero;
  }
  return index;
}

EmbeddingIndex build_embedding_index(std::span<const Example> pool, const Embedder& embedder,
                                     const RetrieverCheckpoint& checkpoint, bool force,
                                     EmbeddingCache* cache) {
  check_embedder_fingerprint(checkpoint, embedder, force);
  const auto raw = embed_requirements(pool, embedder, cache);
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const Example& example : pool) ids.push_back(example.id);
  return index_from_embeddings(std::move(ids), raw, &checkpoint.head, checkpoint.fingerprint());
}

EmbeddingIndex build_raw_index(std::span<const Example> pool, const Embedder& embedder,
                               EmbeddingCache* cache) {
  const auto raw = embed_requirements(pool, embedder, cache);
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const Example& example : pool) ids.push_back(example.id);
  return index_from_embeddings(std::move(ids), raw, nullptr, "raw:" + embedder.fingerprint());
}

std::vector<RankedId> retrieve_by_vector(const EmbeddingIndex& index, const Vector& query,
                                         std::size_t r) {
  if (query.size() != index.vectors.cols()) {
    throw InvalidArgument("retrieve: query dimension " + std::to_string(query.size()) +
                          " does not match index dimension " + std::to_string(index.vectors.cols()));
  }
  const std::size_t keep = clamp_shots(r, index.size());
  const Vector similarities = index.vectors * query;
  std::vector<RankedId> ranked(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    ranked[i] = {index.ids[i], similarities[static_cast<Eigen::Index>(i)]};
  }
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                    ranks_before);
  ranked.resize(keep);
  return ranked;
}

std::vector<RankedId> retrieve(const EmbeddingIndex& index, std::string_view test_requirement,
                               std::size_t r, const RetrieverCheckpoint& checkpoint,
                               const Embedder& embedder) {
  if (index.checkpoint_fingerprint != checkpoint.fingerprint()) {
    throw InvalidArgument("retrieve: index was built with a different checkpoint");
  }
  const auto raw = embedder.embed(test_requirement);
  const Vector query = encode(checkpoint.head, Eigen::Map<const Vector>(raw.data(),
                                                                        static_cast<Eigen::Index>(raw.size())));
  return retrieve_by_vector(index, query, r);
}

std::vector<RankedId> uncertainty_ranking(std::span<const Example> pool, const Scorer& scorer,
                                          std::size_t r) {
  const std::size_t keep = clamp_shots(r, pool.size());
  std::vector<RankedId> ranked;
  ranked.reserve(pool.size());
  for (const Example& example : pool) {
    const ScoreResult result =
        scorer.score_continuation(render_prompt({}, example.requirement), example.code);
    ranked.push_back({example.id, -result.mean()});
  }
  std::sort(ranked.begin(), ranked.end(), ranks_before);
  ranked.resize(keep);
  return ranked;
}

std::vector<RankedId> select_baseline(Strategy strategy, std::span<const Example> pool,
                                      std::string_view test_requirement, std::size_t r,
                                      const SelectionContext& context) {
  switch (strategy) {
    case Strategy::random: {
      const std::size_t keep = clamp_shots(r, pool.size());
      RandomStream stream = RandomStream::keyed(context.seed, {fnv1a64(context.random_key)});
      std::vector<RankedId> chosen;
      for (std::size_t i : stream.sample_without_replacement(pool.size(), keep)) {
        chosen.push_back({pool[i].id, 0.0});
      }
      return chosen;
    }
    case Strategy::bm25: {
      if (context.bm25 == nullptr) throw InvalidArgument("bm25 selection needs a BM25 index");
      const std::size_t keep = clamp_shots(r, context.bm25->size());
      return context.bm25->top_t(tokenize(test_requirement), keep);
    }
    case Strategy::embed_topk: {
      if (context.raw_index == nullptr || context.embedder == nullptr) {
        throw InvalidArgument("embed_topk selection needs a raw embedding index and an embedder");
      }
      const auto raw = context.embedder->embed(test_requirement);
      return retrieve_by_vector(
          *context.raw_index,
          unit_or_zero(Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()))), r);
    }
    case Strategy::uncertainty: {
      if (context.uncertainty == nullptr) {
        throw InvalidArgument("uncertainty selection needs a precomputed uncertainty ranking");
      }
      const std::size_t keep = clamp_shots(r, context.uncertainty->size());
      return {context.uncertainty->begin(),
              context.uncertainty->begin() + static_cast<std::ptrdiff_t>(keep)};
    }
    case Strategy::lail:
      throw InvalidArgument("lail selection needs a trained checkpoint; use retrieve()");
  }
  throw InvalidArgument("unknown strategy");
}

Prompt assemble_prompt(std::span<const RankedId> shots, const ExampleLookup& pool,
                       std::string_view test_requirement, ShotOrder order) {
  if (shots.empty()) throw InvalidArgument("assemble_prompt: no shots");
  std::vector<RankedId> ranked(shots.begin(), shots.end());
  std::sort(ranked.begin(), ranked.end(), ranks_before);
  if (order == ShotOrder::ascending) std::reverse(ranked.begin(), ranked.end());
  Prompt prompt;
  prompt.test_requirement = std::string(test_requirement);
  for (const RankedId& shot : ranked) {
    const Example& example = pool.at(shot.id);
    prompt.shots.push_back({example.requirement, example.code});
  }
  prompt.rendered = render_prompt(prompt.shots, prompt.test_requirement);
  return prompt;
}

std::string selection_to_json_line(const Selection& selection) {
  Json shots = Json::array();
  for (const RankedId& shot : selection.shots) {
    shots.push_back({{"id", shot.id}, {"similarity", shot.score}});
  }
  std::string line = detail::dump_line(
      {{"test_id", selection.test_id}, {"strategy", selection.strategy}, {"shots", shots}});
  line.pop_back();
  return line;
}

std::vector<Selection> read_selections(const std::filesystem::path& path) {
  std::vector<Selection> out;
  const std::string source = path.string();
  detail::for_each_jsonl(path, [&](const Json& object, std::size_t line_no) {
    Selection selection;
    selection.test_id = detail::require_string(object, "test_id", source, line_no);
    selection.strategy = detail::require_string(object, "strategy", source, line_no);
    const Json& shots = detail::require_field(object, "shots", source, line_no);
    if (!shots.is_array()) {
      throw DataError(detail::describe_location(source, line_no) + ": shots must be an array");
    }
    for (const Json& shot : shots) {
      if (!shot.is_object()) {
        throw DataError(detail::describe_location(source, line_no) + ": shot must be an object");
      }
      const Json& similarity = detail::require_field(shot, "similarity", source, line_no);
      if (!similarity.is_number()) {
        throw DataError(detail::describe_location(source, line_no) + ": similarity must be a number");
      }
      selection.shots.push_back(
          {detail::require_string(shot, "id", source, line_no), similarity.get<double>()});
    }
    out.push_back(std::move(selection));
  });
  return out;
}

}  // namespace lail
