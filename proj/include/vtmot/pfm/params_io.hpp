// SPDX-License-Identifier: Apache-2.0
//
// Key -> array documents. Each array is {"shape": [...], "data": [...]}
// with data in row-major order; matrices have rank 2, images rank 3
// (channels, height, width).
#pragma once

#include "vtmot/pfm/fusion.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace vtmot::pfm {

nlohmann::json matrix_to_json(const Matrix& m);
/// Throws Error(InvalidValue) for a malformed record or one that is not rank 2.
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json image_to_json(const Image& img);
Image image_from_json(const nlohmann::json& j);

nlohmann::json to_json(const std::map<std::string, Matrix>& arrays);
std::map<std::string, Matrix> arrays_from_json(const nlohmann::json& j);

nlohmann::json config_to_json(const PfmConfig& c);
PfmConfig config_from_json(const nlohmann::json& j);

/// {"config": {...}, "params": {name: array}}.
nlohmann::json params_to_json(const PfmParams& p);
/// Every parameter of the configured variant must be present with the shape
/// implied by the configuration; otherwise Error(ShapeMismatch) or
/// Error(MissingKey).
PfmParams params_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace vtmot::pfm
