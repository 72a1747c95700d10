#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dome/coin.hpp"
#include "dome/model.hpp"
#include "dome/retriever.hpp"

namespace dome::detail {

using nlohmann::ordered_json;

/// Rejects keys outside the allowed set so config typos fail loudly.
void check_keys(const ordered_json& j, const std::vector<std::string>& allowed,
                const std::string& where);

void assign_size(const ordered_json& j, const char* key, std::size_t& out,
                 const std::string& where);
void assign_u64(const ordered_json& j, const char* key, std::uint64_t& out,
                const std::string& where);
void assign_double(const ordered_json& j, const char* key, double& out,
                   const std::string& where);
void assign_string(const ordered_json& j, const char* key, std::string& out,
                   const std::string& where);

ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const ordered_json& j);

ordered_json biencoder_config_to_json(const BiEncoderConfig& cfg);
BiEncoderConfig biencoder_config_from_json(const ordered_json& j);

ordered_json classifier_config_to_json(const ClassifierConfig& cfg);
ClassifierConfig classifier_config_from_json(const ordered_json& j);

}  // namespace dome::detail
