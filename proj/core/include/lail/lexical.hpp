#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace lail {

/// Lowercases and splits on every non-alphanumeric byte; empty tokens are
/// dropped. Bytes outside ASCII count as separators.
std::vector<std::string> tokenize(std::string_view text);

/// Jaccard similarity of the token sets of two texts. Two texts without any
/// tokens are identical sets and score 1.
double token_jaccard(std::string_view a, std::string_view b);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// A ranked document id with its score.
struct RankedId {
  std::string id;
  double score = 0.0;

  bool operator==(const RankedId&) const = default;
};

/// Okapi BM25 over a fixed document collection.
///
/// idf(t) = ln(1 + (D - df + 0.5) / (df + 0.5)), so scores are never negative.
/// A built index is immutable and safe to query from several threads.
class Bm25Index {
 public:
  /// `ids` and `texts` are parallel; ids must be unique.
  Bm25Index(std::vector<std::string> ids, std::span<const std::string> texts,
            Bm25Params params = {});

  double score(std::span<const std::string> query_tokens, std::string_view doc_id) const;
  double score_at(std::span<const std::string> query_tokens, std::size_t doc_index) const;

  /// The min(t, available) best documents, score descending then id ascending,
  /// never returning an excluded id.
  std::vector<RankedId> top_t(std::span<const std::string> query_tokens, std::size_t t,
                              const std::unordered_set<std::string>& exclude = {}) const;

  std::size_t size() const { return doc_ids_.size(); }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const Bm25Params& params() const { return params_; }
  double avg_doc_length() const { return avg_doc_length_; }
  std::size_t doc_length(std::size_t doc_index) const { return doc_lengths_.at(doc_index); }
  std::size_t doc_frequency(const std::string& token) const;
  std::size_t term_count(std::size_t doc_index, const std::string& token) const;
  double idf(const std::string& token) const;

 private:
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, std::size_t> id_to_index_;
  std::vector<std::unordered_map<std::string, std::size_t>> doc_token_counts_;
  std::vector<std::size_t> doc_lengths_;
  std::unordered_map<std::string, std::size_t> doc_frequency_;
  double avg_doc_length_ = 0.0;
  Bm25Params params_;
};

}  // namespace lail
