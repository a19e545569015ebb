#pragma once

#include <random>
#include <string>
#include <string_view>

#include <json.hpp>

#include "spidernet/supernet.hpp"

namespace spidernet {

inline constexpr std::string_view kGenotypeFormat = "spidernet-genotype/1";

// Structure-only description of a model: per-cell nodes, edges with their
// live op kinds and pruner weights, the id counters and the config echo.
// Operation parameters are not stored. Keys and arrays are in canonical order
// so serialisation is byte-stable.
using Genotype = nlohmann::json;

nlohmann::json model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

Genotype to_genotype(const SupernetModel& model);
std::string serialize_genotype(const SupernetModel& model);

// Rebuilds the structure with freshly initialised operation parameters.
// Unknown format versions and malformed documents raise FormatError.
SupernetModel from_genotype(const Genotype& genotype, std::mt19937_64& rng);
SupernetModel parse_genotype(std::string_view text, std::mt19937_64& rng);

// Same ids, node kinds, edge endpoints, live op kinds and pruner weights.
bool structurally_equal(const SupernetModel& a, const SupernetModel& b);

}  // namespace spidernet
