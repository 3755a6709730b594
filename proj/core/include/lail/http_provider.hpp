#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lail/gateway.hpp"

namespace lail {

/// Client for an OpenAI-compatible completions/embeddings server.
///
/// Scoring uses the echo pattern: the prompt plus continuation is sent with
/// `max_tokens: 0, echo: true, logprobs: 0` and the continuation span is the
/// set of returned tokens whose `text_offset` lies at or past the end of the
/// prompt. Offsets are counted in Unicode code points.
///
/// At most `max_concurrent_requests` requests are in flight across all
/// threads sharing one provider. Connection failures, 429 and 5xx responses
/// are retried with exponential backoff; other statuses fail immediately.
class HttpProvider final : public Scorer, public Generator, public Embedder {
 public:
  explicit HttpProvider(ProviderConfig config);
  ~HttpProvider() override;

  HttpProvider(const HttpProvider&) = delete;
  HttpProvider& operator=(const HttpProvider&) = delete;

  ScoreResult score_continuation(std::string_view prompt,
                                 std::string_view continuation) const override;
  std::vector<std::string> generate(std::string_view prompt,
                                    const GenerationParams& params) const override;
  std::vector<double> embed(std::string_view text) const override;
  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) const override;
  /// Discovered from the first embedding response (a probe request if needed).
  std::size_t dimension() const override;
  std::string fingerprint() const override;
  std::string describe() const override;
  std::size_t concurrency() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lail
