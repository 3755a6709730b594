#include "lail/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include "base64.hpp"
#include "config_json.hpp"
#include "json_io.hpp"
#include "lail/error.hpp"
#include "lail/log.hpp"
#include "lail/random.hpp"

namespace lail {
namespace {

using detail::Json;

void require_dim(const ProjectionHead& head, const Vector& raw) {
  if (static_cast<std::size_t>(raw.size()) != head.input_dim()) {
    throw InvalidArgument("encode: input has dimension " + std::to_string(raw.size()) +
                          ", head expects " + std::to_string(head.input_dim()));
  }
}

void require_unit_or_zero(const Vector& v, std::string_view role) {
  const double norm = v.norm();
  if (norm != 0.0 && std::abs(norm - 1.0) > 1e-6) {
    throw InvalidArgument("infonce_loss: " + std::string(role) + " is not L2-normalized (norm " +
                          std::to_string(norm) + ")");
  }
}

/// Columns of `projected` scaled to unit length; near-zero columns become zero.
/// `norms` receives the pre-normalization lengths (0 for zeroed columns).
Matrix normalize_columns(const Matrix& projected, Vector& norms) {
  Matrix unit = projected;
  norms.resize(projected.cols());
  for (Eigen::Index k = 0; k < projected.cols(); ++k) {
    const double norm = projected.col(k).norm();
    if (norm < kZeroNormThreshold) {
      unit.col(k).setZero();
      norms[k] = 0.0;
    } else {
      unit.col(k) /= norm;
      norms[k] = norm;
    }
  }
  return unit;
}

Matrix project(const ProjectionHead& head, const Matrix& raw_columns) {
  Matrix projected = head.weights * raw_columns;
  if (head.has_bias()) projected.colwise() += head.bias;
  return projected;
}

/// Loss of one anchor over unit columns of `unit`; adds weight * dL/d(unit) into `d_unit`.
double contrastive_term(const Matrix& unit, Eigen::Index anchor, Eigen::Index positive,
                        std::span<const Eigen::Index> negatives, double tau,
                        bool includes_positive, double weight, Matrix& d_unit) {
  const auto a = unit.col(anchor);
  const double positive_logit = a.dot(unit.col(positive)) / tau;
  std::vector<double> logits;
  logits.reserve(negatives.size() + 1);
  if (includes_positive) logits.push_back(positive_logit);
  for (Eigen::Index n : negatives) logits.push_back(a.dot(unit.col(n)) / tau);
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - peak);
  const double log_denominator = peak + std::log(sum);
  const double loss = log_denominator - positive_logit;

  // dL/ds for each similarity.
  double d_positive = -1.0 / tau;
  std::size_t offset = 0;
  if (includes_positive) {
    d_positive += std::exp(logits[0] - log_denominator) / tau;
    offset = 1;
  }
  Vector d_anchor = d_positive * unit.col(positive);
  d_unit.col(positive) += weight * d_positive * a;
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    const double d_negative = std::exp(logits[offset + i] - log_denominator) / tau;
    d_anchor += d_negative * unit.col(negatives[i]);
    d_unit.col(negatives[i]) += weight * d_negative * a;
  }
  d_unit.col(anchor) += weight * d_anchor;
  return loss;
}

/// Back-propagates d(unit columns) through normalization and the linear map.
void backpropagate(const Matrix& raw_columns, const Matrix& unit, const Vector& norms,
                   Matrix& d_unit, HeadGradient& gradient, bool with_bias) {
  for (Eigen::Index k = 0; k < unit.cols(); ++k) {
    if (norms[k] == 0.0) {
      d_unit.col(k).setZero();
      continue;
    }
    const double radial = unit.col(k).dot(d_unit.col(k));
    d_unit.col(k) = (d_unit.col(k) - radial * unit.col(k)) / norms[k];
  }
  gradient.weights.noalias() = d_unit * raw_columns.transpose();
  if (with_bias) gradient.bias = d_unit.rowwise().sum();
}

std::uint64_t id_key(std::string_view id) { return fnv1a64(id); }

}  // namespace

ProjectionHead ProjectionHead::random(std::size_t d_in, std::size_t d_out, std::uint64_t seed,
                                      bool with_bias) {
  if (d_in == 0 || d_out == 0) throw InvalidArgument("ProjectionHead: dimensions must be positive");
  ProjectionHead head;
  head.weights.resize(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(d_in));
  RandomStream stream = RandomStream::keyed(seed, {fnv1a64("projection-init")});
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (Eigen::Index r = 0; r < head.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < head.weights.cols(); ++c) head.weights(r, c) = scale * stream.normal();
  }
  if (with_bias) head.bias = Vector::Zero(static_cast<Eigen::Index>(d_out));
  return head;
}

Encoding encode_flagged(const ProjectionHead& head, const Vector& raw) {
  require_dim(head, raw);
  Vector y = head.weights * raw;
  if (head.has_bias()) y += head.bias;
  const double norm = y.norm();
  if (norm < kZeroNormThreshold) return {Vector::Zero(y.size()), true};
  return {y / norm, false};
}

Vector encode(const ProjectionHead& head, const Vector& raw) { return encode_flagged(head, raw).unit; }

double infonce_loss(const Vector& anchor, const Vector& positive, std::span<const Vector> negatives,
                    double tau, bool denominator_includes_positive) {
  if (!(tau > 0.0)) throw InvalidArgument("infonce_loss: tau must be positive");
  if (negatives.empty()) throw InvalidArgument("infonce_loss: at least one negative is required");
  const Eigen::Index d = anchor.size();
  if (positive.size() != d) throw InvalidArgument("infonce_loss: dimension mismatch (positive)");
  for (const Vector& n : negatives) {
    if (n.size() != d) throw InvalidArgument("infonce_loss: dimension mismatch (negative)");
  }
  require_unit_or_zero(anchor, "anchor");
  require_unit_or_zero(positive, "positive");
  for (const Vector& n : negatives) require_unit_or_zero(n, "negative");

  Matrix unit(d, static_cast<Eigen::Index>(negatives.size() + 2));
  unit.col(0) = anchor;
  unit.col(1) = positive;
  std::vector<Eigen::Index> negative_cols(negatives.size());
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    unit.col(static_cast<Eigen::Index>(i + 2)) = negatives[i];
    negative_cols[i] = static_cast<Eigen::Index>(i + 2);
  }
  Matrix scratch = Matrix::Zero(unit.rows(), unit.cols());
  return contrastive_term(unit, 0, 1, negative_cols, tau, denominator_includes_positive, 0.0, scratch);
}

HeadGradient infonce_grad(const ProjectionHead& head, const Vector& anchor_raw,
                          const Vector& positive_raw, std::span<const Vector> negative_raws,
                          double tau, bool denominator_includes_positive) {
  if (!(tau > 0.0)) throw InvalidArgument("infonce_grad: tau must be positive");
  if (negative_raws.empty()) throw InvalidArgument("infonce_grad: at least one negative is required");
  require_dim(head, anchor_raw);
  require_dim(head, positive_raw);
  for (const Vector& n : negative_raws) require_dim(head, n);

  Matrix raw(static_cast<Eigen::Index>(head.input_dim()),
             static_cast<Eigen::Index>(negative_raws.size() + 2));
  raw.col(0) = anchor_raw;
  raw.col(1) = positive_raw;
  std::vector<Eigen::Index> negative_cols(negative_raws.size());
  for (std::size_t i = 0; i < negative_raws.size(); ++i) {
    raw.col(static_cast<Eigen::Index>(i + 2)) = negative_raws[i];
    negative_cols[i] = static_cast<Eigen::Index>(i + 2);
  }
  Vector norms;
  const Matrix unit = normalize_columns(project(head, raw), norms);
  Matrix d_unit = Matrix::Zero(unit.rows(), unit.cols());
  HeadGradient gradient;
  gradient.loss = contrastive_term(unit, 0, 1, negative_cols, tau, denominator_includes_positive,
                                   1.0, d_unit);
  backpropagate(raw, unit, norms, d_unit, gradient, head.has_bias());
  return gradient;
}

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2, double epsilon)
    : learning_rate_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  if (!(learning_rate > 0.0)) throw InvalidArgument("Adam: learning rate must be positive");
}

void AdamOptimizer::step(ProjectionHead& head, const HeadGradient& gradient) {
  if (steps_ == 0) {
    m_weights_ = Matrix::Zero(head.weights.rows(), head.weights.cols());
    v_weights_ = m_weights_;
    m_bias_ = Vector::Zero(head.bias.size());
    v_bias_ = m_bias_;
  }
  ++steps_;
  const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const double step_size = learning_rate_ / correction1;
  const double root_correction2 = std::sqrt(correction2);

  m_weights_ = beta1_ * m_weights_ + (1.0 - beta1_) * gradient.weights;
  v_weights_ = beta2_ * v_weights_ + (1.0 - beta2_) * gradient.weights.cwiseAbs2();
  head.weights.array() -=
      step_size * m_weights_.array() / ((v_weights_.array().sqrt() / root_correction2) + epsilon_);
  if (head.has_bias()) {
    m_bias_ = beta1_ * m_bias_ + (1.0 - beta1_) * gradient.bias;
    v_bias_ = beta2_ * v_bias_ + (1.0 - beta2_) * gradient.bias.cwiseAbs2();
    head.bias.array() -=
        step_size * m_bias_.array() / ((v_bias_.array().sqrt() / root_correction2) + epsilon_);
  }
}

void TrainConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("train: tau must be positive");
  if (negatives_total < 1) throw InvalidArgument("train: negatives_total must be positive");
  if (tau_ne < 1) throw InvalidArgument("train: tau_ne must be positive");
  if (tau_ne > negatives_total) throw InvalidArgument("train: tau_ne exceeds negatives_total");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning_rate must be positive");
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be positive");
  if (epochs < 1) throw InvalidArgument("train: epochs must be positive");
  if (d_out < 1) throw InvalidArgument("train: d_out must be positive");
}

std::string RetrieverCheckpoint::fingerprint() const {
  std::uint64_t h = fnv1a64(embedder_fingerprint);
  const auto fold = [&h](const double* data, Eigen::Index count) {
    std::string_view bytes(reinterpret_cast<const char*>(data),
                           static_cast<std::size_t>(count) * sizeof(double));
    h = mix64(h ^ fnv1a64(bytes));
  };
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = head.weights;
  fold(row_major.data(), row_major.size());
  fold(head.bias.data(), head.bias.size());
  fold(&tau, 1);
  return hex64(h);
}

void write_checkpoint(const std::filesystem::path& path, const RetrieverCheckpoint& checkpoint) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major =
      checkpoint.head.weights;
  Json document = {
      {"format", "lail.retriever_checkpoint"},
      {"version", 1},
      {"d_in", checkpoint.head.input_dim()},
      {"d_out", checkpoint.head.output_dim()},
      {"weights", detail::encode_doubles({row_major.data(), static_cast<std::size_t>(row_major.size())})},
      {"bias", checkpoint.head.has_bias()
                   ? Json(detail::encode_doubles({checkpoint.head.bias.data(),
                                                  static_cast<std::size_t>(checkpoint.head.bias.size())}))
                   : Json(nullptr)},
      {"tau", checkpoint.tau},
      {"embedder_fingerprint", checkpoint.embedder_fingerprint},
      {"train_config", detail::to_json(checkpoint.train_config)},
      {"source_dataset", checkpoint.source_dataset},
      {"source_scorer", checkpoint.source_scorer},
      {"epoch_losses", checkpoint.epoch_losses},
      {"config_hash", checkpoint.config_hash},
      {"tool_version", checkpoint.tool_version},
  };
  detail::write_file_atomic(path, document.dump(2) + "\n");
}

RetrieverCheckpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ArtifactMissingError("checkpoint not found: " + path.string());
  Json document;
  try {
    document = Json::parse(detail::read_file(path));
  } catch (const Json::parse_error& e) {
    throw DataError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    if (document.at("format") != "lail.retriever_checkpoint") {
      throw DataError("checkpoint " + path.string() + " has an unknown format");
    }
    RetrieverCheckpoint checkpoint;
    const auto d_in = document.at("d_in").get<std::size_t>();
    const auto d_out = document.at("d_out").get<std::size_t>();
    const auto weights = detail::decode_doubles(document.at("weights").get<std::string>());
    if (weights.size() != d_in * d_out) throw DataError("checkpoint weights have the wrong size");
    checkpoint.head.weights.resize(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(d_in));
    for (std::size_t r = 0; r < d_out; ++r) {
      for (std::size_t c = 0; c < d_in; ++c) {
        checkpoint.head.weights(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            weights[r * d_in + c];
      }
    }
    if (!document.at("bias").is_null()) {
      const auto bias = detail::decode_doubles(document.at("bias").get<std::string>());
      if (bias.size() != d_out) throw DataError("checkpoint bias has the wrong size");
      checkpoint.head.bias = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(d_out));
    }
    if (!checkpoint.head.weights.allFinite() || !checkpoint.head.bias.allFinite()) {
      throw DataError("checkpoint holds non-finite parameters");
    }
    checkpoint.tau = document.at("tau").get<double>();
    checkpoint.embedder_fingerprint = document.at("embedder_fingerprint").get<std::string>();
    checkpoint.train_config = detail::train_config_from_json(document.at("train_config"));
    checkpoint.source_dataset = document.at("source_dataset").get<std::string>();
    checkpoint.source_scorer = document.at("source_scorer").get<std::string>();
    checkpoint.epoch_losses = document.at("epoch_losses").get<std::vector<double>>();
    checkpoint.config_hash = document.value("config_hash", "");
    checkpoint.tool_version = document.value("tool_version", "");
    return checkpoint;
  } catch (const Json::exception& e) {
    throw DataError("checkpoint " + path.string() + " is malformed: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("checkpoint " + path.string() + " is malformed: " + e.what());
  }
}

void check_embedder_fingerprint(const RetrieverCheckpoint& checkpoint, const Embedder& embedder,
                                bool force) {
  const std::string actual = embedder.fingerprint();
  if (actual == checkpoint.embedder_fingerprint) return;
  const std::string message = "checkpoint was trained over embedder \"" +
                              checkpoint.embedder_fingerprint + "\" but \"" + actual +
                              "\" is configured";
  if (!force) throw InvalidArgument(message + " (pass --force to override)");
  log_warning(message + "; continuing because of --force");
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path, std::string embedder_fingerprint)
    : path_(std::move(path)), fingerprint_(std::move(embedder_fingerprint)) {}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& path,
                                    const std::string& embedder_fingerprint) {
  EmbeddingCache cache(path, embedder_fingerprint);
  if (!std::filesystem::exists(path)) return cache;
  const auto meta = detail::read_jsonl_meta(path);
  if (!meta || meta->value("embedder_fingerprint", "") != embedder_fingerprint) {
    log_warning("embedding cache " + path.string() + " was written for another embedder; ignoring it");
    return cache;
  }
  const std::string source = path.string();
  detail::for_each_jsonl(
      path,
      [&](const Json& object, std::size_t line_no) {
        const std::string id = detail::require_string(object, "id", source, line_no);
        const Json& values = detail::require_field(object, "vector", source, line_no);
        if (!values.is_array()) {
          throw DataError(detail::describe_location(source, line_no) + ": vector must be an array");
        }
        const auto v = values.get<std::vector<double>>();
        cache.insert(id, Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
      },
      /*tolerate_torn_tail=*/true);
  return cache;
}

const Vector* EmbeddingCache::find(std::string_view id) const {
  auto it = vectors_.find(id);
  return it == vectors_.end() ? nullptr : &it->second;
}

void EmbeddingCache::insert(const std::string& id, Vector vector) {
  auto [it, inserted] = vectors_.insert_or_assign(id, std::move(vector));
  if (inserted) order_.push_back(id);
}

void EmbeddingCache::save() const {
  Json meta = {{"artifact", "embedding_cache"}, {"embedder_fingerprint", fingerprint_}};
  if (provenance_) {
    meta["config_hash"] = provenance_->config_hash;
    meta["tool_version"] = provenance_->tool_version;
  }
  std::string content = detail::dump_line({{std::string(detail::kMetaKey), meta}});
  for (const auto& id : order_) {
    const Vector& v = vectors_.at(id);
    content += detail::dump_line(
        {{"id", id}, {"vector", std::vector<double>(v.data(), v.data() + v.size())}});
  }
  detail::write_file_atomic(path_, content);
}

std::vector<Vector> embed_requirements(std::span<const Example> examples, const Embedder& embedder,
                                       EmbeddingCache* cache) {
  std::vector<Vector> out(examples.size());
  std::vector<std::size_t> missing;
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (cache != nullptr) {
      if (const Vector* hit = cache->find(examples[i].id)) {
        out[i] = *hit;
        continue;
      }
    }
    missing.push_back(i);
    texts.push_back(examples[i].requirement);
  }
  if (!missing.empty()) {
    const auto fresh = embedder.embed_batch(texts);
    if (fresh.size() != missing.size()) throw ProtocolError("embedder returned the wrong batch size");
    for (std::size_t j = 0; j < missing.size(); ++j) {
      out[missing[j]] = Eigen::Map<const Vector>(fresh[j].data(), static_cast<Eigen::Index>(fresh[j].size()));
      if (cache != nullptr) cache->insert(examples[missing[j]].id, out[missing[j]]);
    }
  }
  const Eigen::Index d = out.empty() ? 0 : out.front().size();
  for (const Vector& v : out) {
    if (v.size() != d) throw DataError("embeddings have inconsistent dimensions");
  }
  return out;
}

TrainingResult train_projection(std::span<const LabeledAnchor> labels,
                                std::span<const Example> pool,
                                std::span<const Vector> pool_embeddings, const TrainConfig& config) {
  config.validate();
  if (pool.size() != pool_embeddings.size()) {
    throw InvalidArgument("train: pool and embeddings differ in length");
  }
  if (pool.empty()) throw InvalidArgument("train: empty pool");
  if (labels.empty()) throw InvalidArgument("train: no labeled anchors");
  const ExampleLookup lookup(pool);
  const auto d_in = static_cast<Eigen::Index>(pool_embeddings.front().size());
  Matrix raw(d_in, static_cast<Eigen::Index>(pool.size()));
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool_embeddings[i].size() != d_in) throw InvalidArgument("train: inconsistent embedding dimensions");
    raw.col(static_cast<Eigen::Index>(i)) = pool_embeddings[i];
  }

  struct AnchorPlan {
    std::string id;
    Eigen::Index anchor;
    std::vector<Eigen::Index> positives;
    std::vector<Eigen::Index> hard_negatives;
    std::vector<Eigen::Index> random_pool;  // H = pool \ (stage one + anchor)
  };
  std::vector<AnchorPlan> plans;
  plans.reserve(labels.size());
  const auto column_of = [&](const std::string& id) {
    const Example* found = lookup.find(id);
    if (found == nullptr) throw InvalidArgument("train: labels reference unknown id \"" + id + "\"");
    return static_cast<Eigen::Index>(found - pool.data());
  };
  std::unordered_set<std::string> seen_anchors;
  for (const LabeledAnchor& label : labels) {
    if (!seen_anchors.insert(label.anchor_id).second) {
      throw InvalidArgument("train: duplicate anchor \"" + label.anchor_id + "\"");
    }
    if (label.positives.empty()) {
      throw InvalidArgument("train: anchor \"" + label.anchor_id + "\" has no positives");
    }
    if (label.negatives.size() < config.tau_ne) {
      throw InvalidArgument("train: anchor \"" + label.anchor_id + "\" has fewer than tau_ne negatives");
    }
    AnchorPlan plan;
    plan.id = label.anchor_id;
    plan.anchor = column_of(label.anchor_id);
    for (const auto& p : label.positives) plan.positives.push_back(column_of(p.candidate_id));
    for (const auto& n : label.negatives) plan.hard_negatives.push_back(column_of(n.candidate_id));
    std::vector<bool> excluded(pool.size(), false);
    excluded[static_cast<std::size_t>(plan.anchor)] = true;
    for (const auto& id : label.stage_one_ids) excluded[static_cast<std::size_t>(column_of(id))] = true;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!excluded[i]) plan.random_pool.push_back(static_cast<Eigen::Index>(i));
    }
    plans.push_back(std::move(plan));
  }
  std::sort(plans.begin(), plans.end(),
            [](const AnchorPlan& a, const AnchorPlan& b) { return a.id < b.id; });

  const std::size_t random_wanted = config.negatives_total - config.tau_ne;
  TrainingResult result;
  for (const AnchorPlan& plan : plans) {
    if (plan.random_pool.size() < random_wanted) ++result.clamped_anchors;
  }
  if (result.clamped_anchors > 0) {
    log_warning(std::to_string(result.clamped_anchors) +
                " anchors have fewer than " + std::to_string(random_wanted) +
                " random-negative candidates; using all available");
  }

  result.head = ProjectionHead::random(static_cast<std::size_t>(d_in), config.d_out, config.seed,
                                       config.use_bias);
  AdamOptimizer optimizer(config.learning_rate);
  std::vector<Eigen::Index> negatives;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    RandomStream order_stream = RandomStream::keyed(config.seed, {epoch, fnv1a64("anchor-order")});
    const std::vector<std::size_t> order = order_stream.permutation(plans.size());
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double weight = 1.0 / static_cast<double>(end - begin);
      Vector norms;
      const Matrix unit = normalize_columns(project(result.head, raw), norms);
      Matrix d_unit = Matrix::Zero(unit.rows(), unit.cols());
      for (std::size_t k = begin; k < end; ++k) {
        const AnchorPlan& plan = plans[order[k]];
        RandomStream stream = RandomStream::keyed(config.seed, {epoch, id_key(plan.id)});
        const Eigen::Index positive = plan.positives[stream.below(plan.positives.size())];
        negatives.clear();
        for (std::size_t i : stream.sample_without_replacement(plan.hard_negatives.size(), config.tau_ne)) {
          negatives.push_back(plan.hard_negatives[i]);
        }
        const std::size_t random_count = std::min(random_wanted, plan.random_pool.size());
        for (std::size_t i : stream.sample_without_replacement(plan.random_pool.size(), random_count)) {
          negatives.push_back(plan.random_pool[i]);
        }
        epoch_loss += contrastive_term(unit, plan.anchor, positive, negatives, config.tau,
                                       config.denominator_includes_positive, weight, d_unit);
      }
      HeadGradient gradient;
      backpropagate(raw, unit, norms, d_unit, gradient, result.head.has_bias());
      optimizer.step(result.head, gradient);
    }
    const double mean_loss = epoch_loss / static_cast<double>(plans.size());
    if (!std::isfinite(mean_loss)) throw Error("train: loss diverged at epoch " + std::to_string(epoch + 1));
    result.epoch_losses.push_back(mean_loss);
    log_info("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) +
             " mean loss " + std::to_string(mean_loss));
  }
  return result;
}

RetrieverCheckpoint train_retriever(std::span<const LabeledAnchor> labels,
                                    std::span<const Example> pool, const Embedder& embedder,
                                    const TrainConfig& config, EmbeddingCache* cache) {
  const std::vector<Vector> embeddings = embed_requirements(pool, embedder, cache);
  if (cache != nullptr) cache->save();
  TrainingResult trained = train_projection(labels, pool, embeddings, config);
  RetrieverCheckpoint checkpoint;
  checkpoint.head = std::move(trained.head);
  checkpoint.tau = config.tau;
  checkpoint.embedder_fingerprint = embedder.fingerprint();
  checkpoint.train_config = config;
  checkpoint.epoch_losses = std::move(trained.epoch_losses);
  return checkpoint;
}

}  // namespace lail
