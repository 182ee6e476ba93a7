#include "acpc/model_io.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "acpc/error.hpp"
#include "acpc/io.hpp"
#include "acpc/mlp.hpp"
#include "acpc/tcn.hpp"

namespace acpc {

namespace {

nlohmann::json arch_of(std::string_view kind) {
  if (kind == "tcn") {
    return {{"k", TcnArch::kKernel},
            {"dilations", TcnArch::kDilations},
            {"channels", TcnArch::kChannels},
            {"hidden", TcnArch::kHidden},
            {"window", TcnArch::kWindow},
            {"feature_dim", kFeatureDim}};
  }
  if (kind == "mlp") {
    return {{"layers", MlpModel::kWidths}, {"window", 1}, {"feature_dim", kFeatureDim}};
  }
  throw CorruptFileError("unknown model kind '" + std::string(kind) + "'");
}

std::unique_ptr<ReuseModel> make_empty(std::string_view kind) {
  if (kind == "tcn") return std::make_unique<TcnModel>();
  if (kind == "mlp") return std::make_unique<MlpModel>();
  throw CorruptFileError("unknown model kind '" + std::string(kind) + "'");
}

}  // namespace

std::string serialize_model(const ReuseModel& model) {
  std::ostringstream out;
  out << "{\n  \"version\": " << kModelFormatVersion << ",\n";
  out << "  \"kind\": \"" << model.kind() << "\",\n";
  out << "  \"arch\": " << arch_of(model.kind()).dump() << ",\n";
  out << "  \"params\": {\n";
  const auto params = model.parameters();
  const auto& blocks = model.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    out << "    \"" << blocks[b].name << "\": [";
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      if (i) out << ", ";
      out << format_real(params[blocks[b].offset + i]);
    }
    out << "]" << (b + 1 < blocks.size() ? "," : "") << "\n";
  }
  out << "  }\n}\n";
  return out.str();
}

std::unique_ptr<ReuseModel> deserialize_model(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorruptFileError(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version")) {
    throw CorruptFileError("model file has no version field");
  }
  if (!doc["version"].is_number_integer() || doc["version"].get<int>() != kModelFormatVersion) {
    throw VersionError("unsupported model version " + doc["version"].dump() + " (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  if (!doc.contains("kind") || !doc["kind"].is_string() || !doc.contains("arch") ||
      !doc.contains("params") || !doc["params"].is_object()) {
    throw CorruptFileError("model file lacks kind/arch/params");
  }
  const std::string kind = doc["kind"].get<std::string>();
  auto model = make_empty(kind);
  if (doc["arch"] != arch_of(kind)) {
    throw ShapeError("model architecture " + doc["arch"].dump() + " does not match " +
                     arch_of(kind).dump());
  }
  const auto& params = doc["params"];
  auto dst = model->parameters();
  for (const auto& block : model->blocks()) {
    if (!params.contains(block.name)) throw ShapeError("missing parameter block " + block.name);
    const auto& arr = params[block.name];
    if (!arr.is_array() || arr.size() != block.size()) {
      throw ShapeError("parameter block " + block.name + " has wrong size");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number()) throw CorruptFileError("non-numeric value in " + block.name);
      const double v = arr[i].get<double>();
      if (!std::isfinite(v)) throw CorruptFileError("non-finite value in " + block.name);
      dst[block.offset + i] = v;
    }
  }
  if (params.size() != model->blocks().size()) throw ShapeError("unexpected parameter blocks");
  return model;
}

void save_model(const ReuseModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

std::unique_ptr<ReuseModel> load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file(path));
}

}  // namespace acpc
