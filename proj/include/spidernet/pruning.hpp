#pragma once

#include <cstddef>
#include <vector>

#include "spidernet/ids.hpp"
#include "spidernet/primitives.hpp"
#include "spidernet/supernet.hpp"

namespace spidernet {

inline constexpr std::size_t kDeadheadWindowEpochs = 4;
inline constexpr double kDeadheadThreshold = 0.75;

struct DeadheadRecord {
  int cycle = 0;
  int epoch = 0;
  EdgeId edge;
  PrimitiveKind kind = PrimitiveKind::kIdentity;
  double off_fraction = 0.0;
  // Removed because its edge or node was stranded by another deletion.
  bool collateral = false;
};

// Sizes every op's off-history to batches_per_epoch * 4 batches. Histories
// whose capacity changes are cleared.
void set_usage_window(SupernetModel& model, std::size_t batches_per_epoch);

// Appends Gate(w) == 0 for each op on the edge.
void record_usage(Edge& edge);
void record_usage(SupernetModel& model);

struct RemovalOutcome {
  bool removed = false;
  // Ops dropped along with stranded edges and nodes.
  std::vector<DeadheadRecord> collateral;
};

// Deletes op `index` of `edge`. An emptied edge is removed, then every
// intermediate node no longer on an Input -> Output path goes with its
// incident edges. A deletion that would leave the cell's output unreachable
// is refused and the model is left untouched.
RemovalOutcome remove_op(SupernetModel& model, EdgeId edge, std::size_t index);

struct DeadheadResult {
  std::vector<DeadheadRecord> records;  // pruner-triggered, then collateral
  std::size_t deleted = 0;              // pruner-triggered deletions only
  std::size_t suppressed = 0;           // refused by the connectivity guard
};

// Deletes every op whose full 4-epoch window has an off-fraction strictly
// above 0.75. Ops with a partial window are never touched.
DeadheadResult deadhead_pass(SupernetModel& model, int cycle, int epoch,
                             double threshold = kDeadheadThreshold);

}  // namespace spidernet
