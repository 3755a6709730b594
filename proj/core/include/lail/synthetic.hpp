#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

#include "lail/corpus.hpp"

namespace lail {

/// Knobs for a clustered toy corpus.
///
/// Each example belongs to one latent cluster. Its requirement mixes a few of
/// the cluster's keywords into shared boilerplate and random noise words, so
/// requirement text tracks the cluster only weakly. Its program is built from
/// the cluster's operation tokens (plus optional per-example noise), so code
/// similarity tracks the cluster strongly.
struct SyntheticSpec {
  std::string name = "synthetic";
  std::size_t clusters = 10;
  std::size_t train_size = 200;
  std::size_t test_size = 50;
  std::size_t keywords_per_cluster = 6;
  std::size_t keywords_per_requirement = 2;
  std::size_t noise_vocabulary = 300;
  std::size_t noise_per_requirement = 10;
  std::size_t code_operations = 10;
  std::size_t code_noise_operations = 0;
  /// Prefix for every generated word, so two corpora can use disjoint vocabularies.
  std::string vocabulary_tag = "a";
  std::string id_prefix;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  Dataset dataset;
  std::map<std::string, std::size_t> cluster_of;
};

/// Deterministic in `spec`. Example i of a split belongs to cluster i mod clusters.
SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec);

}  // namespace lail
