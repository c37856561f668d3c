#pragma once

#include <filesystem>
#include <string>

#include "qir/model.hpp"
#include "json.hpp"

namespace qir {

/// {family, links, p, d, beta (d arrays of length p), tail_scaling (null or {scale, offset})}.
nlohmann::json model_to_json(const QirModel& model);
QirModel model_from_json(const nlohmann::json& doc);

void save_model(const QirModel& model, const std::filesystem::path& path);
QirModel load_model(const std::filesystem::path& path);

}  // namespace qir
