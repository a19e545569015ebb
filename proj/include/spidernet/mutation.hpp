#pragma once

#include <cstddef>
#include <random>

#include "spidernet/ids.hpp"
#include "spidernet/supernet.hpp"

namespace spidernet {

struct MutationResult {
  CellId cell;
  EdgeId mutated;    // A -> B, retained
  NodeId new_node;   // C
  EdgeId into_new;   // A -> C
  EdgeId out_of_new; // C -> B
};

// Triangular rewrite of A -> B: adds a fresh node C with edges A -> C and
// C -> B, each carrying the full operation set with fresh parameters and
// pruners. A -> B is kept, so every existing path survives and A sends two
// outputs, C relays, and B receives two inputs.
MutationResult triangular_mutate(SupernetModel& model, EdgeId edge, std::mt19937_64& rng);

// Re-draws every operation parameter and pruner weight and clears usage
// histories. Structure (including past deletions) is untouched.
void reinit_weights(SupernetModel& model, std::mt19937_64& rng);

// Analytic stand-in for device memory: 4 bytes per stored number.
struct MemoryEstimate {
  std::size_t parameter_bytes = 0;
  std::size_t activation_bytes = 0;

  std::size_t total() const { return parameter_bytes + activation_bytes; }
  MemoryEstimate& operator+=(const MemoryEstimate& o) {
    parameter_bytes += o.parameter_bytes;
    activation_bytes += o.activation_bytes;
    return *this;
  }
  friend bool operator==(const MemoryEstimate&, const MemoryEstimate&) = default;
};

inline constexpr std::size_t kBytesPerValue = 4;

// Parameters plus BatchNorm buffers; activations are every recorded output
// at the given batch size, doubled for the retained gradient.
MemoryEstimate estimate_memory(const PrimitiveBlock& block, Shape input, std::size_t batch);
// Operation body only (its pruner belongs to the edge).
MemoryEstimate estimate_memory(const CandidateOp& op, int channels, int extent,
                               std::size_t batch);
// Ops, their pruners and the edge summation.
MemoryEstimate estimate_memory(const Edge& edge, int channels, int extent, std::size_t batch);
MemoryEstimate estimate_memory(const SupernetModel& model, std::size_t batch);
// An edge carrying every searchable op at the cell's shape: the cost of one
// new mutation edge.
MemoryEstimate full_edge_estimate(const SupernetModel& model, const Cell& cell,
                                  std::size_t batch);

}  // namespace spidernet
