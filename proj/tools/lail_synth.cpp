// Synthetic corpora and exact-match verdict files for offline runs of the
// pipeline against the mock providers.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lail/corpus.hpp"
#include "lail/error.hpp"
#include "lail/evaluation.hpp"
#include "lail/synthetic.hpp"

namespace {

int make_corpus(const lail::SyntheticSpec& spec, const std::filesystem::path& out) {
  const auto corpus = lail::make_synthetic_corpus(spec);
  lail::write_dataset(corpus.dataset, out);
  std::cout << "wrote " << corpus.dataset.train.size() << " train and "
            << corpus.dataset.test.size() << " test examples to " << out.string() << "\n";
  return 0;
}

int write_exact_match(const std::filesystem::path& dataset_dir, const std::filesystem::path& samples,
                      const std::filesystem::path& out) {
  const auto tests = lail::read_examples(dataset_dir / "test.jsonl");
  const auto records = lail::read_samples(samples);
  const auto verdicts = lail::exact_match_verdicts(records, lail::ExampleLookup(tests));
  lail::write_verdicts(out, verdicts);
  std::size_t passed = 0;
  for (const auto& v : verdicts) passed += v.pass ? 1 : 0;
  std::cout << passed << "/" << verdicts.size() << " samples match -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic corpora and exact-match verdicts", "lail-synth"};
  app.require_subcommand(1, 1);

  lail::SyntheticSpec spec;
  std::string out;
  auto* corpus = app.add_subcommand("corpus", "Write a clustered synthetic dataset");
  corpus->add_option("--out", out, "Output directory")->required();
  corpus->add_option("--name", spec.name);
  corpus->add_option("--clusters", spec.clusters);
  corpus->add_option("--train", spec.train_size);
  corpus->add_option("--test", spec.test_size);
  corpus->add_option("--keywords-per-cluster", spec.keywords_per_cluster);
  corpus->add_option("--keywords-per-requirement", spec.keywords_per_requirement);
  corpus->add_option("--noise-vocabulary", spec.noise_vocabulary);
  corpus->add_option("--noise-per-requirement", spec.noise_per_requirement);
  corpus->add_option("--code-operations", spec.code_operations);
  corpus->add_option("--code-noise", spec.code_noise_operations);
  corpus->add_option("--tag", spec.vocabulary_tag, "Vocabulary prefix");
  corpus->add_option("--id-prefix", spec.id_prefix);
  corpus->add_option("--seed", spec.seed);

  std::string dataset;
  std::string samples;
  auto* verdicts = app.add_subcommand("verdicts", "Exact-match verdicts for a samples file");
  verdicts->add_option("--dataset", dataset, "Dataset directory holding test.jsonl")->required();
  verdicts->add_option("--samples", samples, "Samples file")->required();
  verdicts->add_option("--out", out, "Verdict file to write")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (corpus->parsed()) return make_corpus(spec, out);
    return write_exact_match(dataset, samples, out);
  } catch (const lail::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
