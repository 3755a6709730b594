#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lail/corpus.hpp"

namespace lail {

/// Natural-log probabilities of each continuation token.
struct ScoreResult {
  std::vector<double> token_logprobs;

  std::size_t token_count() const { return token_logprobs.size(); }
  double total() const;
  /// Length-normalized log-probability (total / token_count).
  double mean() const;
};

struct GenerationParams {
  double temperature = 0.8;
  double top_p = 0.95;
  int max_tokens = 500;
  int n_samples = 5;
  std::optional<std::uint64_t> seed;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

enum class ProviderKind { http, mock_scorer, mock_generator, hash_embedder };

std::string_view to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(std::string_view name);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{250};
};

struct ProviderConfig {
  ProviderKind kind = ProviderKind::mock_scorer;
  std::string endpoint;
  std::string model_name;
  /// Environment variable holding the bearer token; empty for no auth.
  std::string auth_token_env;
  std::chrono::milliseconds timeout{60'000};
  int max_concurrent_requests = 4;
  RetryPolicy retry;
  /// Embedding dimension: hash_embedder bucket count; optional hint for http.
  std::size_t dimension = 256;
  /// mock_scorer probability floor.
  double epsilon = 0.01;

  void validate() const;
};

/// Scores a continuation token by token under a frozen LLM.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoreResult score_continuation(std::string_view prompt,
                                         std::string_view continuation) const = 0;
  /// Identifies the provider in artifact provenance.
  virtual std::string describe() const = 0;
  /// How many calls may usefully run at once.
  virtual std::size_t concurrency() const { return 1; }
};

/// Samples program completions for a prompt.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::vector<std::string> generate(std::string_view prompt,
                                            const GenerationParams& params) const = 0;
  virtual std::string describe() const = 0;
  virtual std::size_t concurrency() const { return 1; }
};

/// Maps text to a fixed-dimension vector.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(std::string_view text) const = 0;
  virtual std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) const;
  virtual std::size_t dimension() const = 0;
  /// Provider kind + model + dimension; checkpoints record it.
  virtual std::string fingerprint() const = 0;
  virtual std::size_t concurrency() const { return 1; }
};

/// Offline scorer. The continuation is one pseudo-token whose log-probability
/// is ln(eps + (1 - eps) * J), where J is the token Jaccard similarity between
/// the continuation and the code of the last in-context shot in the prompt
/// (J = 0 when the prompt has no shot or does not parse).
class MockScorer final : public Scorer {
 public:
  explicit MockScorer(double epsilon = 0.01);
  ScoreResult score_continuation(std::string_view prompt,
                                 std::string_view continuation) const override;
  std::string describe() const override;

 private:
  double epsilon_;
};

/// Offline generator. Every sample is the code of the candidate whose
/// requirement has the highest token Jaccard with the prompt's final
/// requirement.
///
/// Without a configured pool the candidates are the prompt's own shots (ties go
/// to the shot nearest the final requirement); with a pool, the pool examples
/// (ties go to the lowest id). No candidates, or an unparsable prompt, yields
/// empty strings.
class MockGenerator final : public Generator {
 public:
  MockGenerator() = default;
  explicit MockGenerator(std::vector<Example> pool);
  std::vector<std::string> generate(std::string_view prompt,
                                    const GenerationParams& params) const override;
  std::string describe() const override;

 private:
  std::optional<std::vector<Example>> pool_;
};

/// Signed feature hashing of lexical tokens: bucket = FNV-1a(token) mod d,
/// sign = -1 when the hash's top bit is set, then L2-normalized. Text without
/// tokens maps to the zero vector.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dimension = 256);
  std::vector<double> embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }
  std::string fingerprint() const override;

 private:
  std::size_t dimension_;
};

std::shared_ptr<Scorer> make_scorer(const ProviderConfig& config);
/// `mock_pool` switches mock_generator from in-context mode to pool mode.
std::shared_ptr<Generator> make_generator(const ProviderConfig& config,
                                          std::optional<std::vector<Example>> mock_pool = {});
std::shared_ptr<Embedder> make_embedder(const ProviderConfig& config);

}  // namespace lail
