#pragma once

#include <nlohmann/json.hpp>

#include "csnet/csnet_model.hpp"

namespace csnet {

nlohmann::json to_json(const CsNetConfig& config);
// Missing keys keep the values already in `config`; unknown keys and
// ill-typed values throw InvalidConfig naming the key.
void merge_json(CsNetConfig& config, const nlohmann::json& j);

}  // namespace csnet
