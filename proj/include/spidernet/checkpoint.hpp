#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

#include <json.hpp>

#include "spidernet/dataset.hpp"
#include "spidernet/supernet.hpp"

namespace spidernet {

inline constexpr std::string_view kWeightsFormat = "spidernet-weights/1";
inline constexpr std::string_view kConfigFormat = "spidernet-config/1";

// Genotype plus every parameter tensor and BatchNorm buffer, keyed by block
// path.
nlohmann::json weights_json(SupernetModel& model);
SupernetModel model_from_weights(const nlohmann::json& j);

// Writes to a sibling temporary file, then renames over `path`. Failures
// raise RunError.
void write_atomic(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

nlohmann::json dataset_spec_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

// Fixed file layout of one run.
struct RunDirectory {
  std::filesystem::path root;

  explicit RunDirectory(std::filesystem::path dir) : root(std::move(dir)) {}
  void create() const;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path runlog() const { return root / "runlog.json"; }
  std::filesystem::path report() const { return root / "report.json"; }
  std::filesystem::path genotype(int cycle) const {
    return root / ("genotype_cycle" + std::to_string(cycle) + ".json");
  }
  std::filesystem::path final_genotype() const { return root / "genotype_final.json"; }
  std::filesystem::path weights() const { return root / "weights_final.json"; }
  std::filesystem::path dot() const { return root / "genotype_final.dot"; }
};

}  // namespace spidernet
