#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lail/corpus.hpp"
#include "lail/gateway.hpp"
#include "lail/labeling.hpp"
#include "lail/version.hpp"

namespace lail {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Below this norm a projected vector is reported as zero instead of normalized.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Trainable linear map over frozen embeddings: y = W x + b.
struct ProjectionHead {
  Matrix weights;  // d_out x d_in
  Vector bias;     // d_out, or empty when the head has no bias

  std::size_t input_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weights.rows()); }
  bool has_bias() const { return bias.size() > 0; }

  /// Gaussian weights with standard deviation 1/sqrt(d_in); zero bias.
  static ProjectionHead random(std::size_t d_in, std::size_t d_out, std::uint64_t seed,
                               bool with_bias = true);
};

/// W x + b scaled to unit length, or the zero vector (flag set) when its norm
/// is below kZeroNormThreshold. Throws InvalidArgument on a dimension mismatch.
struct Encoding {
  Vector unit;
  bool zero = false;
};
Encoding encode_flagged(const ProjectionHead& head, const Vector& raw);
Vector encode(const ProjectionHead& head, const Vector& raw);

/// Contrastive loss for one anchor with similarities s = dot products:
///   L = -log( e^{s(a,p)/tau} / (e^{s(a,p)/tau} [if included] + sum_n e^{s(a,n)/tau}) ).
/// Inputs must be unit vectors (within 1e-6) or exactly zero.
double infonce_loss(const Vector& anchor, const Vector& positive, std::span<const Vector> negatives,
                    double tau, bool denominator_includes_positive = true);

struct HeadGradient {
  Matrix weights;
  Vector bias;
  double loss = 0.0;
};

/// Gradient of infonce_loss(encode(a), encode(p), encode(n...)) with respect to
/// the head's weights and bias; all roles share the head.
HeadGradient infonce_grad(const ProjectionHead& head, const Vector& anchor_raw,
                          const Vector& positive_raw, std::span<const Vector> negative_raws,
                          double tau, bool denominator_includes_positive = true);

/// Adam with bias correction over a ProjectionHead's parameters.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                         double epsilon = 1e-8);

  void step(ProjectionHead& head, const HeadGradient& gradient);
  long steps_taken() const { return steps_; }

 private:
  double learning_rate_;
  double beta1_;
  double beta2_;
  double epsilon_;
  long steps_ = 0;
  Matrix m_weights_, v_weights_;
  Vector m_bias_, v_bias_;
};

struct TrainConfig {
  double tau = 0.07;
  /// |N_i|: hard plus random negatives per anchor.
  std::size_t negatives_total = 64;
  /// Negatives drawn from the anchor's labeled negative set.
  std::size_t tau_ne = 1;
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t d_out = 128;
  bool denominator_includes_positive = true;
  bool use_bias = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct RetrieverCheckpoint {
  ProjectionHead head;
  double tau = 0.07;
  std::string embedder_fingerprint;
  TrainConfig train_config;
  std::string source_dataset;
  std::string source_scorer;
  std::vector<double> epoch_losses;
  std::string config_hash;
  std::string tool_version;

  /// Stable digest of the head, tau and embedder fingerprint.
  std::string fingerprint() const;
};

/// Single JSON document; weight and bias arrays are base64 of little-endian
/// IEEE-754 doubles (weights row-major).
void write_checkpoint(const std::filesystem::path& path, const RetrieverCheckpoint& checkpoint);
RetrieverCheckpoint read_checkpoint(const std::filesystem::path& path);

/// Throws InvalidArgument when the checkpoint was trained over another embedder
/// and `force` is not set (a warning is logged instead).
void check_embedder_fingerprint(const RetrieverCheckpoint& checkpoint, const Embedder& embedder,
                                bool force);

/// Line-delimited {"id", "vector"} records valid for one embedder fingerprint.
class EmbeddingCache {
 public:
  EmbeddingCache(std::filesystem::path path, std::string embedder_fingerprint);

  /// Reads an existing file; a file written for another fingerprint is ignored.
  static EmbeddingCache load(const std::filesystem::path& path,
                             const std::string& embedder_fingerprint);

  const Vector* find(std::string_view id) const;
  void insert(const std::string& id, Vector vector);
  std::size_t size() const { return order_.size(); }
  /// Recorded in the file's provenance line on save.
  void set_provenance(Provenance provenance) { provenance_ = std::move(provenance); }
  /// Rewrites the file with every entry in insertion order.
  void save() const;

 private:
  std::filesystem::path path_;
  std::string fingerprint_;
  std::optional<Provenance> provenance_;
  std::vector<std::string> order_;
  std::map<std::string, Vector, std::less<>> vectors_;
};

/// Raw embeddings of the requirements of `examples`, in order. Misses are
/// embedded in one batch and, when a cache is given, added to it.
std::vector<Vector> embed_requirements(std::span<const Example> examples, const Embedder& embedder,
                                       EmbeddingCache* cache = nullptr);

struct TrainingResult {
  ProjectionHead head;
  std::vector<double> epoch_losses;
  /// Anchors for which fewer random negatives than requested were available.
  std::size_t clamped_anchors = 0;
};

/// Optimizes a fresh head over precomputed pool embeddings (parallel to `pool`).
///
/// Per epoch and anchor: one positive drawn uniformly from the labeled
/// positives, tau_ne from the labeled negatives, and negatives_total - tau_ne
/// without replacement from the pool minus the stage-one set and the anchor.
/// Draws come from streams keyed by (seed, epoch, anchor id) and anchors are
/// visited in an id-sorted, per-epoch shuffled order, so the storage order of
/// `labels` does not matter. Minibatches minimize the mean loss with Adam.
TrainingResult train_projection(std::span<const LabeledAnchor> labels,
                                std::span<const Example> pool,
                                std::span<const Vector> pool_embeddings, const TrainConfig& config);

/// Embeds the pool (through `cache` when given), trains, and packages a
/// checkpoint with provenance.
RetrieverCheckpoint train_retriever(std::span<const LabeledAnchor> labels,
                                    std::span<const Example> pool, const Embedder& embedder,
                                    const TrainConfig& config, EmbeddingCache* cache = nullptr);

}  // namespace lail
