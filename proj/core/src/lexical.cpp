#include "lail/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lail/error.hpp"

namespace lail {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    const bool alnum = c < 0x80 && ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                                    (c >= 'A' && c <= 'Z'));
    if (alnum) {
      current.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double token_jaccard(std::string_view a, std::string_view b) {
  const auto ta = tokenize(a);
  const auto tb = tokenize(b);
  const std::unordered_set<std::string> sa(ta.begin(), ta.end());
  const std::unordered_set<std::string> sb(tb.begin(), tb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t shared = 0;
  for (const auto& token : sa) shared += sb.count(token);
  const std::size_t joint = sa.size() + sb.size() - shared;
  return static_cast<double>(shared) / static_cast<double>(joint);
}

Bm25Index::Bm25Index(std::vector<std::string> ids, std::span<const std::string> texts,
                     Bm25Params params)
    : doc_ids_(std::move(ids)), params_(params) {
  if (doc_ids_.size() != texts.size()) {
    throw InvalidArgument("Bm25Index: ids and texts differ in length");
  }
  if (!(params_.k1 > 0.0)) throw InvalidArgument("Bm25Index: k1 must be positive");
  if (params_.b < 0.0 || params_.b > 1.0) throw InvalidArgument("Bm25Index: b must lie in [0,1]");
  doc_token_counts_.resize(doc_ids_.size());
  doc_lengths_.resize(doc_ids_.size());
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    if (!id_to_index_.emplace(doc_ids_[i], i).second) {
      throw InvalidArgument("Bm25Index: duplicate id \"" + doc_ids_[i] + "\"");
    }
    const auto tokens = tokenize(texts[i]);
    doc_lengths_[i] = tokens.size();
    for (const auto& token : tokens) ++doc_token_counts_[i][token];
    for (const auto& [token, _] : doc_token_counts_[i]) ++doc_frequency_[token];
  }
  if (!doc_lengths_.empty()) {
    avg_doc_length_ = static_cast<double>(std::accumulate(doc_lengths_.begin(), doc_lengths_.end(),
                                                          std::size_t{0})) /
                      static_cast<double>(doc_lengths_.size());
  }
}

std::size_t Bm25Index::doc_frequency(const std::string& token) const {
  auto it = doc_frequency_.find(token);
  return it == doc_frequency_.end() ? 0 : it->second;
}

std::size_t Bm25Index::term_count(std::size_t doc_index, const std::string& token) const {
  const auto& counts = doc_token_counts_.at(doc_index);
  auto it = counts.find(token);
  return it == counts.end() ? 0 : it->second;
}

double Bm25Index::idf(const std::string& token) const {
  const double docs = static_cast<double>(doc_ids_.size());
  const double df = static_cast<double>(doc_frequency(token));
  return std::log(1.0 + (docs - df + 0.5) / (df + 0.5));
}

double Bm25Index::score_at(std::span<const std::string> query_tokens,
                           std::size_t doc_index) const {
  if (doc_index >= doc_ids_.size()) throw InvalidArgument("Bm25Index: document index out of range");
  const auto& counts = doc_token_counts_[doc_index];
  // An all-empty collection has avg length 0; every tf is 0 then, so the
  // length ratio never matters.
  const double length_ratio =
      avg_doc_length_ > 0.0 ? static_cast<double>(doc_lengths_[doc_index]) / avg_doc_length_ : 0.0;
  const double norm = params_.k1 * (1.0 - params_.b + params_.b * length_ratio);
  double total = 0.0;
  for (const auto& token : query_tokens) {
    auto it = counts.find(token);
    if (it == counts.end()) continue;
    const double tf = static_cast<double>(it->second);
    total += idf(token) * (tf * (params_.k1 + 1.0)) / (tf + norm);
  }
  return total;
}

double Bm25Index::score(std::span<const std::string> query_tokens, std::string_view doc_id) const {
  auto it = id_to_index_.find(std::string(doc_id));
  if (it == id_to_index_.end()) {
    throw InvalidArgument("Bm25Index: unknown document id \"" + std::string(doc_id) + "\"");
  }
  return score_at(query_tokens, it->second);
}

std::vector<RankedId> Bm25Index::top_t(std::span<const std::string> query_tokens, std::size_t t,
                                       const std::unordered_set<std::string>& exclude) const {
  if (t == 0) throw InvalidArgument("top_t: t must be at least 1");
  std::vector<RankedId> ranked;
  ranked.reserve(doc_ids_.size());
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    if (exclude.count(doc_ids_[i]) != 0) continue;
    ranked.push_back({doc_ids_[i], score_at(query_tokens, i)});
  }
  const auto by_rank = [](const RankedId& a, const RankedId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  const std::size_t keep = std::min(t, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                    ranked.end(), by_rank);
  ranked.resize(keep);
  return ranked;
}

}  // namespace lail
