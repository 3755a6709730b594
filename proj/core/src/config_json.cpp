#include "config_json.hpp"

#include <type_traits>

#include "lail/error.hpp"

namespace lail::detail {
namespace {

template <typename T>
void read_into(const Json& object, std::string_view key, T& target, std::string_view section) {
  auto it = object.find(key);
  if (it == object.end()) return;
  if constexpr (std::is_unsigned_v<T>) {
    if (it->is_number_integer() && !it->is_number_unsigned()) {
      throw ConfigError(std::string(section) + "." + std::string(key) + " must not be negative");
    }
  }
  try {
    target = it->get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(section) + "." + std::string(key) + " has the wrong type");
  }
}

void require_object(const Json& object, std::string_view section) {
  if (!object.is_object()) throw ConfigError(std::string(section) + " must be a JSON object");
}

}  // namespace

void reject_unknown_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                         std::string_view section) {
  for (const auto& [key, _] : object.items()) {
    bool known = false;
    for (std::string_view a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key \"" + key + "\" in " + std::string(section));
  }
}

Json to_json(const TrainConfig& c) {
  return {{"tau", c.tau},
          {"negatives_total", c.negatives_total},
          {"tau_ne", c.tau_ne},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"d_out", c.d_out},
          {"denominator_includes_positive", c.denominator_includes_positive},
          {"use_bias", c.use_bias}};
}

TrainConfig train_config_from_json(const Json& object, TrainConfig c) {
  constexpr std::string_view kSection = "train";
  require_object(object, kSection);
  reject_unknown_keys(object,
                      {"tau", "negatives_total", "tau_ne", "learning_rate", "batch_size", "epochs",
                       "seed", "d_out", "denominator_includes_positive", "use_bias"},
                      kSection);
  read_into(object, "tau", c.tau, kSection);
  read_into(object, "negatives_total", c.negatives_total, kSection);
  read_into(object, "tau_ne", c.tau_ne, kSection);
  read_into(object, "learning_rate", c.learning_rate, kSection);
  read_into(object, "batch_size", c.batch_size, kSection);
  read_into(object, "epochs", c.epochs, kSection);
  read_into(object, "seed", c.seed, kSection);
  read_into(object, "d_out", c.d_out, kSection);
  read_into(object, "denominator_includes_positive", c.denominator_includes_positive, kSection);
  read_into(object, "use_bias", c.use_bias, kSection);
  return c;
}

Json to_json(const GenerationParams& p) {
  Json out = {{"temperature", p.temperature},
              {"top_p", p.top_p},
              {"max_tokens", p.max_tokens},
              {"n_samples", p.n_samples}};
  out["seed"] = p.seed ? Json(*p.seed) : Json(nullptr);
  return out;
}

GenerationParams generation_params_from_json(const Json& object, GenerationParams p) {
  constexpr std::string_view kSection = "eval.generation";
  require_object(object, kSection);
  reject_unknown_keys(object, {"temperature", "top_p", "max_tokens", "n_samples", "seed"}, kSection);
  read_into(object, "temperature", p.temperature, kSection);
  read_into(object, "top_p", p.top_p, kSection);
  read_into(object, "max_tokens", p.max_tokens, kSection);
  read_into(object, "n_samples", p.n_samples, kSection);
  if (auto it = object.find("seed"); it != object.end()) {
    if (it->is_null()) {
      p.seed.reset();
    } else {
      std::uint64_t seed = 0;
      read_into(object, "seed", seed, kSection);
      p.seed = seed;
    }
  }
  return p;
}

Json to_json(const ProviderConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"endpoint", c.endpoint},
          {"model_name", c.model_name},
          {"auth_token_env", c.auth_token_env},
          {"timeout_ms", c.timeout.count()},
          {"max_concurrent_requests", c.max_concurrent_requests},
          {"retry", {{"max_attempts", c.retry.max_attempts},
                     {"backoff_base_ms", c.retry.backoff_base.count()}}},
          {"dimension", c.dimension},
          {"epsilon", c.epsilon}};
}

ProviderConfig provider_config_from_json(const Json& object) {
  constexpr std::string_view kSection = "providers";
  require_object(object, kSection);
  reject_unknown_keys(object,
                      {"kind", "endpoint", "model_name", "auth_token_env", "timeout_ms",
                       "max_concurrent_requests", "retry", "dimension", "epsilon"},
                      kSection);
  ProviderConfig c;
  std::string kind;
  read_into(object, "kind", kind, kSection);
  if (kind.empty()) throw ConfigError("provider config needs a \"kind\"");
  c.kind = provider_kind_from_string(kind);
  read_into(object, "endpoint", c.endpoint, kSection);
  read_into(object, "model_name", c.model_name, kSection);
  read_into(object, "auth_token_env", c.auth_token_env, kSection);
  long long timeout_ms = c.timeout.count();
  read_into(object, "timeout_ms", timeout_ms, kSection);
  c.timeout = std::chrono::milliseconds(timeout_ms);
  read_into(object, "max_concurrent_requests", c.max_concurrent_requests, kSection);
  if (auto it = object.find("retry"); it != object.end()) {
    require_object(*it, "providers.retry");
    reject_unknown_keys(*it, {"max_attempts", "backoff_base_ms"}, "providers.retry");
    read_into(*it, "max_attempts", c.retry.max_attempts, "providers.retry");
    long long backoff_ms = c.retry.backoff_base.count();
    read_into(*it, "backoff_base_ms", backoff_ms, "providers.retry");
    c.retry.backoff_base = std::chrono::milliseconds(backoff_ms);
  }
  read_into(object, "dimension", c.dimension, kSection);
  read_into(object, "epsilon", c.epsilon, kSection);
  c.validate();
  return c;
}

Json to_json(const LabelingConfig& c) {
  return {{"t", c.t},
          {"z", c.z},
          {"v", c.v},
          {"scorer_kind", std::string(to_string(c.scorer_kind))},
          {"k1", c.bm25.k1},
          {"b", c.bm25.b},
          {"workers", c.workers}};
}

LabelingConfig labeling_config_from_json(const Json& object, LabelingConfig c) {
  constexpr std::string_view kSection = "label";
  require_object(object, kSection);
  reject_unknown_keys(object, {"t", "z", "v", "scorer_kind", "k1", "b", "workers"}, kSection);
  read_into(object, "t", c.t, kSection);
  read_into(object, "z", c.z, kSection);
  read_into(object, "v", c.v, kSection);
  std::string kind(to_string(c.scorer_kind));
  read_into(object, "scorer_kind", kind, kSection);
  c.scorer_kind = scorer_kind_from_string(kind);
  read_into(object, "k1", c.bm25.k1, kSection);
  read_into(object, "b", c.bm25.b, kSection);
  read_into(object, "workers", c.workers, kSection);
  return c;
}

}  // namespace lail::detail
