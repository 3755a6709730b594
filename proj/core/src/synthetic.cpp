#include "lail/synthetic.hpp"

#include <algorithm>

#include "lail/error.hpp"
#include "lail/random.hpp"

namespace lail {
namespace {

std::string word(const SyntheticSpec& spec, std::string_view kind, std::size_t a, std::size_t b) {
  return spec.vocabulary_tag + std::string(kind) + std::to_string(a) + "x" + std::to_string(b);
}

Example make_example(const SyntheticSpec& spec, std::string id, std::size_t cluster,
                     RandomStream& stream) {
  std::vector<std::string> words;
  for (std::size_t i : stream.sample_without_replacement(spec.keywords_per_cluster,
                                                         spec.keywords_per_requirement)) {
    words.push_back(word(spec, "kw", cluster, i));
  }
  for (std::size_t i : stream.sample_without_replacement(spec.noise_vocabulary,
                                                         spec.noise_per_requirement)) {
    words.push_back(word(spec, "w", 0, i));
  }
  std::string requirement = "Write a function that";
  for (std::size_t i : stream.permutation(words.size())) requirement += " " + words[i];
  requirement += ".";

  std::string code = "def task(x):\n";
  for (std::size_t j = 0; j < spec.code_operations; ++j) {
    code += "    x = " + word(spec, "op", cluster, j) + "(x)\n";
  }
  for (std::size_t j = 0; j < spec.code_noise_operations; ++j) {
    code += "    x = " + word(spec, "aux", 0, stream.below(1'000'000)) + "(x)\n";
  }
  code += "    return x\n";
  return {std::move(id), std::move(requirement), std::move(code), {"assert callable(task)"}};
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.clusters == 0) throw InvalidArgument("synthetic: clusters must be positive");
  if (spec.keywords_per_requirement > spec.keywords_per_cluster ||
      spec.noise_per_requirement > spec.noise_vocabulary) {
    throw InvalidArgument("synthetic: cannot draw more words than the vocabulary holds");
  }
  SyntheticCorpus corpus;
  corpus.dataset.name = spec.name;
  corpus.dataset.language_tag = "python";
  const auto fill = [&](std::vector<Example>& split, std::string_view split_name, std::size_t size) {
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t cluster = i % spec.clusters;
      std::string id = spec.id_prefix + std::string(split_name) + "-" + std::to_string(i);
      RandomStream stream = RandomStream::keyed(spec.seed, {fnv1a64(id)});
      corpus.cluster_of[id] = cluster;
      split.push_back(make_example(spec, std::move(id), cluster, stream));
    }
  };
  fill(corpus.dataset.train, "train", spec.train_size);
  fill(corpus.dataset.test, "test", spec.test_size);
  return corpus;
}

}  // namespace lail
