#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spidernet/ids.hpp"
#include "spidernet/metrics.hpp"
#include "spidernet/pruning.hpp"

namespace spidernet {

inline constexpr std::string_view kRunLogFormat = "spidernet-runlog/1";

// Final-training records use this cycle index.
inline constexpr int kFinalPhase = -1;

struct MutationRecord {
  int cycle = 0;
  int attempt = 0;
  std::optional<EdgeId> edge;  // empty: no viable mutation
  bool applied = false;
  CellId cell;
  NodeId new_node;
  EdgeId into_new;
  EdgeId out_of_new;
  std::size_t memory_bytes_after = 0;
};

struct SelectionRecord {
  int cycle = 0;
  int attempt = 0;
  std::vector<CandidateRow> candidates;
  std::optional<std::size_t> winner;
  std::size_t model_bytes = 0;
  std::size_t edge_bytes = 0;
  std::size_t budget_bytes = 0;
  bool gate_passed = false;
};

enum class DeletionCause { kPruner, kCollateral, kRandom };

struct DeletionRecord {
  DeadheadRecord op;  // cycle is kFinalPhase during final training
  DeletionCause cause = DeletionCause::kPruner;
  bool refused = false;  // connectivity guard said no
};

struct FinalStats {
  double test_accuracy = 0.0;
  std::size_t parameter_count = 0;
  std::size_t peak_memory_bytes = 0;
  std::size_t final_memory_bytes = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t ops = 0;
};

struct Timing {
  double search_seconds = 0.0;
  double final_seconds = 0.0;
  double total_seconds = 0.0;
};

// Append-only record of one run. Everything except `timing` is a pure
// function of the seed, config and dataset.
struct RunLog {
  std::string variant = "spidernet";
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json dataset = nlohmann::json::object();

  std::vector<std::size_t> attempts_per_cycle;
  std::vector<std::size_t> cycle_deadheads;
  std::size_t final_deadheads = 0;
  std::vector<MutationRecord> mutations;
  std::vector<SelectionRecord> selections;
  std::vector<DeletionRecord> deletions;
  std::vector<std::string> notes;
  FinalStats final;
  Timing timing;

  std::size_t attempted_mutations() const;
  std::size_t applied_mutations() const;
};

nlohmann::json to_json(const RunLog& log);
// Same document without the wall-clock block.
nlohmann::json to_json_untimed(const RunLog& log);
std::string serialize_runlog(const RunLog& log);
RunLog runlog_from_json(const nlohmann::json& j);
RunLog parse_runlog(std::string_view text);

// kappa = +inf is written as the string "inf".
nlohmann::json kappa_json(double kappa);
double kappa_from_json(const nlohmann::json& j);

std::string_view cause_name(DeletionCause cause);

}  // namespace spidernet
