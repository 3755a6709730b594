#pragma once

// JSON mappings for configuration structs shared by checkpoints and the
// pipeline configuration file. Readers start from `defaults` and override
// only the keys present; unknown keys raise ConfigError.

#include "json_io.hpp"
#include "lail/gateway.hpp"
#include "lail/labeling.hpp"
#include "lail/retriever.hpp"

namespace lail::detail {

Json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& object, TrainConfig defaults = {});

Json to_json(const GenerationParams& params);
GenerationParams generation_params_from_json(const Json& object, GenerationParams defaults = {});

Json to_json(const ProviderConfig& config);
ProviderConfig provider_config_from_json(const Json& object);

Json to_json(const LabelingConfig& config);
LabelingConfig labeling_config_from_json(const Json& object, LabelingConfig defaults = {});

/// Throws ConfigError naming `section` when `object` has a key outside `allowed`.
void reject_unknown_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                         std::string_view section);

}  // namespace lail::detail
