#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

#include <json.hpp>

#include "spidernet/dataset.hpp"
#include "spidernet/metrics.hpp"
#include "spidernet/runlog.hpp"
#include "spidernet/supernet.hpp"

namespace spidernet {

struct SearchConfig {
  int reductions = 2;
  int init_channels = 16;
  std::size_t vram_budget = std::size_t{512} << 20;
  int cycles = 15;
  int mutations_per_cycle = 3;
  int epochs_per_cycle = 4;
  int train_epochs = 600;
  std::size_t n_good = 5;
  std::size_t batch_size = 64;
  double base_lr = 0.01;
  double dropout = 0.2;
  std::uint64_t seed = 0;
  std::size_t probe_size = 8;
  std::size_t lrc_samples = 500;
};

nlohmann::json search_config_json(const SearchConfig& config);
SearchConfig search_config_from_json(const nlohmann::json& j);
// Throws ConfigError on any out-of-range field.
void validate(const SearchConfig& config);
ModelConfig model_config_for(const SearchConfig& config, const Dataset& data);

// Independent generator for one purpose (`tag`) and index under the run seed.
std::mt19937_64 derive_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

struct TrainPhase {
  int epochs = 1;
  double base_lr = 0.01;
  std::size_t batch_size = 64;
  // Pruner weights follow SGD and ops are deadheaded every epoch. Otherwise
  // pruner weights stay frozen and nothing is deleted.
  bool live_pruners = true;
  int cycle = 0;  // kFinalPhase for the final training
  // Runs after each epoch (and its deadhead pass) with the epoch index.
  std::function<void(int)> after_epoch;
};

struct TrainOutcome {
  std::size_t deleted = 0;  // pruner-triggered deletions
  std::vector<DeletionRecord> records;
  double last_loss = 0.0;
};

// SGD with a cosine schedule spanning exactly `phase.epochs`. A non-finite
// loss (or one past float range) raises RunError naming the epoch.
TrainOutcome train_prune_cycle(SupernetModel& model, const Dataset& data, const TrainPhase& phase,
                               std::mt19937_64& rng);

// Eval-mode accuracy on the test split.
double evaluate_accuracy(SupernetModel& model, const Dataset& data, std::size_t batch_size = 256);

struct RunHooks {
  std::function<void(int cycle, const SupernetModel&)> cycle_end;
  std::function<void(SupernetModel&, SupernetModel&, SupernetModel&, const Tensor&)> observer;
};

struct RunResult {
  SupernetModel model;
  RunLog log;
};

RunResult run_spidernet(const SearchConfig& config, const Dataset& data,
                        const RunHooks& hooks = {});

enum class RandomVariant { kR1 = 1, kR2 = 2, kR3 = 3, kR4 = 4 };

struct VariantTraits {
  bool random_cycle_deletion;
  bool random_final_deletion;
  bool final_pruners;
};
VariantTraits traits(RandomVariant variant);
std::string_view variant_name(RandomVariant variant);

// Replays the reference's mutation-attempt and deletion counts with random
// choices. The reference must come from a run with the same config skeleton.
RunResult run_random_variant(RandomVariant variant, const RunLog& reference,
                             const SearchConfig& config, const Dataset& data,
                             const RunHooks& hooks = {});

// Deletes `count` uniformly chosen ops one at a time. Guard refusals are
// recorded and not retried. Returns the number actually deleted.
std::size_t random_delete(SupernetModel& model, std::size_t count, int cycle, int epoch,
                          std::mt19937_64& rng, std::vector<DeletionRecord>& records);

inline constexpr std::string_view kReportFormat = "spidernet-report/1";

// Table-style summary: accuracy, times in seconds, parameter count and the
// peak memory estimate.
nlohmann::json finalize_report(const RunLog& log, const SupernetModel& model);

}  // namespace spidernet
