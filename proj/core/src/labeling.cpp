#include "lail/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "json_io.hpp"
#include "lail/error.hpp"
#include "lail/log.hpp"
#include "lail/parallel.hpp"
#include "lail/prompt.hpp"

namespace lail {
namespace {

using detail::Json;

std::string one_shot_prompt(const Example& anchor, const Example& candidate) {
  const Shot shot{candidate.requirement, candidate.code};
  return render_prompt(std::span<const Shot>(&shot, 1), anchor.requirement);
}

bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.candidate_id < b.candidate_id;
}

Json scored_to_json(const std::vector<ScoredCandidate>& scored) {
  Json out = Json::array();
  for (const auto& c : scored) out.push_back({{"id", c.candidate_id}, {"score", c.score}});
  return out;
}

std::vector<ScoredCandidate> scored_from_json(const Json& array, ScorerKind kind,
                                              std::string_view source, std::size_t line_no) {
  if (!array.is_array()) {
    throw DataError(detail::describe_location(source, line_no) + ": expected an array of candidates");
  }
  std::vector<ScoredCandidate> out;
  for (const Json& item : array) {
    if (!item.is_object()) {
      throw DataError(detail::describe_location(source, line_no) + ": candidate must be an object");
    }
    const Json& score = detail::require_field(item, "score", source, line_no);
    if (!score.is_number()) {
      throw DataError(detail::describe_location(source, line_no) + ": score must be a number");
    }
    out.push_back({detail::require_string(item, "id", source, line_no), score.get<double>(), kind});
  }
  return out;
}

LabeledAnchor anchor_from_json(const Json& object, std::string_view source, std::size_t line_no) {
  LabeledAnchor anchor;
  anchor.anchor_id = detail::require_string(object, "anchor_id", source, line_no);
  try {
    anchor.scorer_kind =
        scorer_kind_from_string(detail::require_string(object, "scorer_kind", source, line_no));
  } catch (const ConfigError& e) {
    throw DataError(detail::describe_location(source, line_no) + ": " + e.what());
  }
  const Json& stage_one = detail::require_field(object, "stage_one", source, line_no);
  if (!stage_one.is_array()) {
    throw DataError(detail::describe_location(source, line_no) + ": stage_one must be an array");
  }
  for (const Json& id : stage_one) {
    if (!id.is_string()) {
      throw DataError(detail::describe_location(source, line_no) + ": stage_one ids must be strings");
    }
    anchor.stage_one_ids.push_back(id.get<std::string>());
  }
  anchor.positives = scored_from_json(detail::require_field(object, "positives", source, line_no),
                                      anchor.scorer_kind, source, line_no);
  anchor.negatives = scored_from_json(detail::require_field(object, "negatives", source, line_no),
                                      anchor.scorer_kind, source, line_no);
  return anchor;
}

struct AnchorOutcome {
  std::optional<LabeledAnchor> labeled;
  std::vector<CandidateFailure> failures;
  std::size_t calls = 0;
};

}  // namespace

std::string_view to_string(ScorerKind kind) {
  return kind == ScorerKind::probability ? "probability" : "match_bleu";
}

ScorerKind scorer_kind_from_string(std::string_view name) {
  if (name == "probability") return ScorerKind::probability;
  if (name == "match_bleu") return ScorerKind::match_bleu;
  throw ConfigError("unknown scorer_kind \"" + std::string(name) + "\"");
}

double metric_m(const Example& anchor, const Example& candidate, const Scorer& scorer) {
  const ScoreResult result = scorer.score_continuation(one_shot_prompt(anchor, candidate), anchor.code);
  if (result.token_count() == 0) throw ProtocolError("scorer returned no tokens");
  return result.mean();
}

double bleu4(std::span<const std::string> hypothesis, std::span<const std::string> reference,
             double smoothing) {
  if (hypothesis.empty()) return reference.empty() ? 1.0 : 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts;
    if (reference.size() >= n) {
      for (std::size_t i = 0; i + n <= reference.size(); ++i) {
        ++ref_counts[{reference.begin() + static_cast<std::ptrdiff_t>(i),
                      reference.begin() + static_cast<std::ptrdiff_t>(i + n)}];
      }
    }
    std::map<std::vector<std::string>, std::size_t> hyp_counts;
    std::size_t total = 0;
    if (hypothesis.size() >= n) {
      for (std::size_t i = 0; i + n <= hypothesis.size(); ++i) {
        ++hyp_counts[{hypothesis.begin() + static_cast<std::ptrdiff_t>(i),
                      hypothesis.begin() + static_cast<std::ptrdiff_t>(i + n)}];
        ++total;
      }
    }
    std::size_t matched = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(count, it->second);
    }
    log_sum += std::log((static_cast<double>(matched) + smoothing) /
                        (static_cast<double>(total) + smoothing));
  }
  const double hyp_len = static_cast<double>(hypothesis.size());
  const double ref_len = static_cast<double>(reference.size());
  const double brevity = std::min(1.0, std::exp(1.0 - ref_len / hyp_len));
  return brevity * std::exp(log_sum / 4.0);
}

double match_bleu(const Example& anchor, const Example& candidate, const Generator& generator) {
  GenerationParams greedy;
  greedy.temperature = 0.0;
  greedy.top_p = 1.0;
  greedy.n_samples = 1;
  const auto programs = generator.generate(one_shot_prompt(anchor, candidate), greedy);
  if (programs.size() != 1) throw ProtocolError("generator returned the wrong number of samples");
  return bleu4(tokenize(programs.front()), tokenize(anchor.code));
}

LabeledAnchor label_anchor(std::string_view anchor_id, std::span<const std::string> stage_one_ids,
                           std::span<const ScoredCandidate> scored, std::size_t z, std::size_t v) {
  if (z < 1 || v < 1) throw InvalidArgument("label_anchor: z and v must be at least 1");
  if (z + v > scored.size()) {
    throw InvalidArgument("label_anchor: z + v = " + std::to_string(z + v) + " exceeds " +
                          std::to_string(scored.size()) + " scored candidates");
  }
  std::unordered_set<std::string_view> seen;
  for (const auto& candidate : scored) {
    if (candidate.candidate_id == anchor_id) {
      throw InvalidArgument("label_anchor: anchor scored as its own candidate");
    }
    if (!std::isfinite(candidate.score)) throw InvalidArgument("label_anchor: non-finite score");
    if (!seen.insert(candidate.candidate_id).second) {
      throw InvalidArgument("label_anchor: duplicate candidate " + candidate.candidate_id);
    }
  }
  std::vector<ScoredCandidate> ranked(scored.begin(), scored.end());
  std::sort(ranked.begin(), ranked.end(), ranks_before);
  LabeledAnchor out;
  out.anchor_id = std::string(anchor_id);
  out.scorer_kind = ranked.front().scorer_kind;
  out.stage_one_ids.assign(stage_one_ids.begin(), stage_one_ids.end());
  out.positives.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(z));
  out.negatives.assign(ranked.end() - static_cast<std::ptrdiff_t>(v), ranked.end());
  return out;
}

std::string labeled_anchor_to_json_line(const LabeledAnchor& anchor) {
  Json object = {{"anchor_id", anchor.anchor_id},
                 {"scorer_kind", std::string(to_string(anchor.scorer_kind))},
                 {"stage_one", anchor.stage_one_ids},
                 {"positives", scored_to_json(anchor.positives)},
                 {"negatives", scored_to_json(anchor.negatives)}};
  std::string line = detail::dump_line(object);
  line.pop_back();
  return line;
}

LabeledAnchor labeled_anchor_from_json_line(std::string_view line) {
  return anchor_from_json(detail::parse_object_line(line, "<labels>", 1), "<labels>", 1);
}

std::vector<LabeledAnchor> read_labels(const std::filesystem::path& path) {
  std::vector<LabeledAnchor> out;
  const std::string source = path.string();
  detail::for_each_jsonl(path, [&](const Json& object, std::size_t line_no) {
    out.push_back(anchor_from_json(object, source, line_no));
  });
  return out;
}

LabelingReport build_labeled_dataset(std::span<const Example> pool, const LabelingConfig& config,
                                     LabelingProviders providers,
                                     const std::optional<LabelsFile>& file) {
  if (config.t < 1) throw InvalidArgument("labeling: t must be at least 1");
  if (config.z < 1 || config.v < 1) throw InvalidArgument("labeling: z and v must be at least 1");
  const bool by_probability = config.scorer_kind == ScorerKind::probability;
  if (by_probability && providers.scorer == nullptr) {
    throw InvalidArgument("labeling: probability scoring needs a scorer");
  }
  if (!by_probability && providers.generator == nullptr) {
    throw InvalidArgument("labeling: match_bleu scoring needs a generator");
  }

  std::vector<std::string> ids;
  std::vector<std::string> requirements;
  ids.reserve(pool.size());
  requirements.reserve(pool.size());
  for (const Example& example : pool) {
    ids.push_back(example.id);
    requirements.push_back(example.requirement);
  }
  const Bm25Index index(ids, requirements, config.bm25);
  const ExampleLookup lookup(pool);

  LabelingReport report;
  std::map<std::string, LabeledAnchor, std::less<>> completed;
  if (file) {
    const auto meta = detail::read_jsonl_meta(file->path);
    const bool resumable = meta && meta->value("config_hash", "") == file->config_hash;
    if (resumable) {
      detail::truncate_torn_tail(file->path);
      const std::string source = file->path.string();
      detail::for_each_jsonl(file->path, [&](const Json& object, std::size_t line_no) {
        LabeledAnchor anchor = anchor_from_json(object, source, line_no);
        std::string key = anchor.anchor_id;
        completed.emplace(std::move(key), std::move(anchor));
      });
    } else {
      if (std::filesystem::exists(file->path)) {
        log_warning("labels file " + file->path.string() + " belongs to another configuration; restarting");
      }
      detail::write_file_atomic(
          file->path, detail::dump_line({{std::string(detail::kMetaKey),
                                          {{"artifact", "labels"},
                                           {"config_hash", file->config_hash},
                                           {"tool_version", file->tool_version}}}}));
    }
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (completed.count(pool[i].id) == 0) pending.push_back(i);
  }
  report.resumed_anchors = pool.size() - pending.size();

  const auto label_one = [&](std::size_t pool_index) {
    AnchorOutcome outcome;
    const Example& anchor = pool[pool_index];
    const auto stage_one =
        index.top_t(tokenize(anchor.requirement), config.t, std::unordered_set<std::string>{anchor.id});
    std::vector<std::string> stage_one_ids;
    std::vector<ScoredCandidate> scored;
    for (const auto& ranked : stage_one) {
      stage_one_ids.push_back(ranked.id);
      const Example& candidate = lookup.at(ranked.id);
      ++outcome.calls;
      try {
        const double score = by_probability ? metric_m(anchor, candidate, *providers.scorer)
                                            : match_bleu(anchor, candidate, *providers.generator);
        if (!std::isfinite(score)) throw ProtocolError("non-finite score");
        scored.push_back({candidate.id, score, config.scorer_kind});
      } catch (const ProviderError& e) {
        outcome.failures.push_back({anchor.id, candidate.id, e.what()});
      }
    }
    if (scored.size() >= config.z + config.v) {
      outcome.labeled = label_anchor(anchor.id, stage_one_ids, scored, config.z, config.v);
    }
    return outcome;
  };

  std::size_t workers = config.workers;
  if (workers == 0) {
    workers = by_probability ? providers.scorer->concurrency() : providers.generator->concurrency();
  }
  workers = std::max<std::size_t>(workers, 1);
  const std::size_t chunk = std::max<std::size_t>(workers * 4, 16);
  for (std::size_t begin = 0; begin < pending.size(); begin += chunk) {
    const std::size_t end = std::min(pending.size(), begin + chunk);
    std::vector<AnchorOutcome> outcomes(end - begin);
    parallel_for(outcomes.size(), workers,
                 [&](std::size_t i) { outcomes[i] = label_one(pending[begin + i]); });
    std::string lines;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      AnchorOutcome& outcome = outcomes[i];
      report.scorer_calls += outcome.calls;
      for (auto& failure : outcome.failures) report.failures.push_back(std::move(failure));
      const std::string& anchor_id = pool[pending[begin + i]].id;
      if (!outcome.labeled) {
        log_warning("dropping anchor " + anchor_id + ": fewer than z + v scored candidates");
        report.dropped_anchors.push_back(anchor_id);
        continue;
      }
      lines += labeled_anchor_to_json_line(*outcome.labeled);
      lines.push_back('\n');
      completed.emplace(anchor_id, std::move(*outcome.labeled));
    }
    if (file && !lines.empty()) detail::append_file(file->path, lines);
  }

  for (const Example& example : pool) {
    auto it = completed.find(example.id);
    if (it != completed.end()) report.anchors.push_back(it->second);
  }
  return report;
}

}  // namespace lail
