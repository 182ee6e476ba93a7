#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "acpc/model.hpp"

namespace acpc {

inline constexpr int kModelFormatVersion = 1;

// JSON document with `version`, `kind`, `arch` and row-major named `params`;
// reals are written with 17 significant digits.
std::string serialize_model(const ReuseModel& model);
std::unique_ptr<ReuseModel> deserialize_model(std::string_view text);

void save_model(const ReuseModel& model, const std::filesystem::path& path);
std::unique_ptr<ReuseModel> load_model(const std::filesystem::path& path);

}  // namespace acpc
