#include "lail/gateway.hpp"

#include <cmath>
#include <limits>

#include "lail/error.hpp"
#include "lail/http_provider.hpp"
#include "lail/lexical.hpp"
#include "lail/prompt.hpp"
#include "lail/random.hpp"

namespace lail {

double ScoreResult::total() const {
  double sum = 0.0;
  for (double lp : token_logprobs) sum += lp;
  return sum;
}

double ScoreResult::mean() const {
  if (token_logprobs.empty()) throw InvalidArgument("ScoreResult::mean: no tokens");
  return total() / static_cast<double>(token_logprobs.size());
}

void GenerationParams::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("temperature must be a finite value >= 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidArgument("top_p must lie in (0, 1]");
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be positive");
  if (n_samples < 1) throw InvalidArgument("n_samples must be positive");
}

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::http: return "http";
    case ProviderKind::mock_scorer: return "mock_scorer";
    case ProviderKind::mock_generator: return "mock_generator";
    case ProviderKind::hash_embedder: return "hash_embedder";
  }
  return "unknown";
}

ProviderKind provider_kind_from_string(std::string_view name) {
  if (name == "http") return ProviderKind::http;
  if (name == "mock_scorer") return ProviderKind::mock_scorer;
  if (name == "mock_generator") return ProviderKind::mock_generator;
  if (name == "hash_embedder") return ProviderKind::hash_embedder;
  throw ConfigError("unknown provider kind \"" + std::string(name) + "\"");
}

void ProviderConfig::validate() const {
  if (kind == ProviderKind::http && (endpoint.empty() || model_name.empty())) {
    throw ConfigError("http provider requires endpoint and model_name");
  }
  if (max_concurrent_requests < 1 || max_concurrent_requests > 4096) {
    throw ConfigError("max_concurrent_requests must lie in [1, 4096]");
  }
  if (retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be positive");
  if (kind == ProviderKind::hash_embedder && dimension == 0) {
    throw ConfigError("hash_embedder dimension must be positive");
  }
  if (kind == ProviderKind::mock_scorer && !(epsilon > 0.0 && epsilon <= 1.0)) {
    throw ConfigError("mock_scorer epsilon must lie in (0, 1]");
  }
}

std::vector<std::vector<double>> Embedder::embed_batch(std::span<const std::string> texts) const {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) out.push_back(embed(text));
  return out;
}

MockScorer::MockScorer(double epsilon) : epsilon_(epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw InvalidArgument("MockScorer: epsilon must lie in (0, 1]");
}

ScoreResult MockScorer::score_continuation(std::string_view prompt,
                                           std::string_view continuation) const {
  if (continuation.empty()) throw InvalidArgument("score_continuation: empty continuation");
  double similarity = 0.0;
  if (auto parsed = parse_prompt(prompt); parsed && !parsed->shots.empty()) {
    similarity = token_jaccard(parsed->shots.back().code, continuation);
  }
  return ScoreResult{{std::log(epsilon_ + (1.0 - epsilon_) * similarity)}};
}

std::string MockScorer::describe() const { return "mock_scorer"; }

MockGenerator::MockGenerator(std::vector<Example> pool) : pool_(std::move(pool)) {}

std::vector<std::string> MockGenerator::generate(std::string_view prompt,
                                                 const GenerationParams& params) const {
  params.validate();
  std::string best;
  if (auto parsed = parse_prompt(prompt)) {
    double best_similarity = -1.0;
    if (pool_) {
      const Example* winner = nullptr;
      for (const Example& example : *pool_) {
        const double s = token_jaccard(example.requirement, parsed->test_requirement);
        if (s > best_similarity || (s == best_similarity && example.id < winner->id)) {
          best_similarity = s;
          winner = &example;
        }
      }
      if (winner) best = winner->code;
    } else {
      // Later shots win ties: they sit nearer the final requirement.
      for (const Shot& shot : parsed->shots) {
        const double s = token_jaccard(shot.requirement, parsed->test_requirement);
        if (s >= best_similarity) {
          best_similarity = s;
          best = shot.code;
        }
      }
    }
  }
  return std::vector<std::string>(static_cast<std::size_t>(params.n_samples), best);
}

std::string MockGenerator::describe() const {
  return pool_ ? "mock_generator(pool)" : "mock_generator(in-context)";
}

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw InvalidArgument("HashEmbedder: dimension must be positive");
}

std::vector<double> HashEmbedder::embed(std::string_view text) const {
  std::vector<double> v(dimension_, 0.0);
  for (const auto& token : tokenize(text)) {
    const std::uint64_t h = fnv1a64(token);
    const double sign = (h >> 63) == 0 ? 1.0 : -1.0;
    v[h % dimension_] += sign;
  }
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
  }
  return v;
}

std::string HashEmbedder::fingerprint() const {
  return "hash_embedder:fnv1a64:" + std::to_string(dimension_);
}

std::shared_ptr<Scorer> make_scorer(const ProviderConfig& config) {
  config.validate();
  switch (config.kind) {
    case ProviderKind::mock_scorer: return std::make_shared<MockScorer>(config.epsilon);
    case ProviderKind::http: return std::make_shared<HttpProvider>(config);
    default:
      throw ConfigError("provider kind \"" + std::string(to_string(config.kind)) +
                        "\" cannot score continuations");
  }
}

std::shared_ptr<Generator> make_generator(const ProviderConfig& config,
                                          std::optional<std::vector<Example>> mock_pool) {
  config.validate();
  switch (config.kind) {
    case ProviderKind::mock_generator:
      return mock_pool ? std::make_shared<MockGenerator>(std::move(*mock_pool))
                       : std::make_shared<MockGenerator>();
    case ProviderKind::http: return std::make_shared<HttpProvider>(config);
    default:
      throw ConfigError("provider kind \"" + std::string(to_string(config.kind)) +
                        "\" cannot generate");
  }
}

std::shared_ptr<Embedder> make_embedder(const ProviderConfig& config) {
  config.validate();
  switch (config.kind) {
    case ProviderKind::hash_embedder: return std::make_shared<HashEmbedder>(config.dimension);
    case ProviderKind::http: return std::make_shared<HttpProvider>(config);
    default:
      throw ConfigError("provider kind \"" + std::string(to_string(config.kind)) +
                        "\" cannot embed");
  }
}

}  // namespace lail
