#pragma once

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spidernet/ids.hpp"
#include "spidernet/primitives.hpp"
#include "spidernet/pruner.hpp"
#include "spidernet/tape.hpp"

namespace spidernet {

// Structural configuration of a supernet. Only reductions and init_channels
// shape the search space; the rest describe the data.
struct ModelConfig {
  int reductions = 2;
  int init_channels = 16;
  int input_channels = 3;
  int image_size = 32;
  int classes = 10;
  double dropout = 0.2;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class NodeKind { kInput, kIntermediate, kOutput };
enum class CellKind { kNormal, kReduction };

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::kIntermediate;
  // Input nodes only: the earlier cell feeding this node, or empty for the
  // stem output.
  std::optional<CellId> source;
};

struct CandidateOp {
  PrimitiveKind kind = PrimitiveKind::kIdentity;
  PrimitiveBlock block;
  PrunerState pruner;
};

struct Edge {
  EdgeId id;
  NodeId from;
  NodeId to;
  std::vector<CandidateOp> ops;
  // Output multiplied by 0. Used only for the disconnected trial copies of
  // mutation selection.
  bool disconnected = false;
};

// Brings an input node's source to the cell's resolution and width: one
// FactorizedReduce per halving, then a 1x1 projection with BatchNorm.
struct InputAligner {
  NodeId node;
  std::vector<PrimitiveBlock> reduce;
  PrimitiveBlock projection;
};

struct Cell {
  CellId id;
  CellKind kind = CellKind::kNormal;
  int channels = 0;
  // Number of spatial halvings relative to the stem output.
  int scale = 0;
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<InputAligner> aligners;

  const Node* find_node(NodeId id) const;
  Edge* find_edge(EdgeId id);
  const Edge* find_edge(EdgeId id) const;
  const InputAligner* aligner_for(NodeId id) const;
  NodeId output_node() const;
  std::vector<NodeId> input_nodes() const;
  bool has_outgoing(NodeId id) const;
};

class SupernetModel {
 public:
  ModelConfig config;
  PrimitiveBlock stem;
  PrimitiveBlock stem_bn;
  std::vector<Cell> cells;
  PrimitiveBlock classifier;

  std::uint32_t next_node = 1;
  std::uint32_t next_edge = 1;
  std::uint32_t next_cell = 1;

  NodeId allocate_node() { return NodeId{next_node++}; }
  EdgeId allocate_edge() { return EdgeId{next_edge++}; }

  Cell* cell_of(EdgeId edge);
  const Cell* cell_of(EdgeId edge) const;
  Edge* find_edge(EdgeId edge);
  const Edge* find_edge(EdgeId edge) const;

  std::size_t node_count() const;
  std::size_t edge_count() const;
  std::size_t op_count() const;
  // Every edge id in cell order, then id order.
  std::vector<EdgeId> edge_ids() const;
  // Spatial extent of the given cell's tensors.
  int cell_extent(const Cell& cell) const;
};

// Model with one Normal cell followed by `reductions` Reduction cells. Cell i
// (1-based) gets i Input nodes, one Intermediate and one Output node, one edge
// from each Input to the Intermediate and one Intermediate -> Output edge.
// Every edge carries all seven searchable operations.
SupernetModel init_minimum_viable_model(const ModelConfig& config, std::mt19937_64& rng);

// Fresh CandidateOp of the given kind sized for the cell.
CandidateOp make_candidate_op(PrimitiveKind kind, int channels, std::mt19937_64& rng);
// Edge carrying one op of every searchable kind.
Edge make_full_edge(EdgeId id, NodeId from, NodeId to, int channels, std::mt19937_64& rng);
InputAligner make_aligner(NodeId node, int source_channels, int source_scale,
                          const Cell& target, std::mt19937_64& rng);

// Source channel count and scale feeding an input node.
struct SourceShape {
  int channels;
  int scale;
};
SourceShape source_shape(const SupernetModel& model, const Node& input);

Var align_input_preprocess(Tape& tape, Var source, InputAligner& aligner);

// Logits (batch, classes, 1, 1). Dropout draws from tape.dropout_rng.
Var model_forward(SupernetModel& model, Tape& tape, Var batch);
Tensor model_logits(SupernetModel& model, const Tensor& batch, Mode mode);

// Checks every structural invariant: input/output counts, intra-cell edges,
// no self loops or duplicate pairs, acyclicity, and that every intermediate
// node lies on an Input -> Output path. Throws StructuralError.
void validate(const SupernetModel& model);
bool cell_is_acyclic(const Cell& cell);
// Node ids of the cell in a topological order of its edge relation.
std::vector<NodeId> topological_order(const Cell& cell);
bool output_reachable(const Cell& cell);

enum class ParamSet {
  kAll,           // function parameters and pruner weights
  kFunction,      // excludes pruner weights
  kPruners,
};
std::vector<Param*> collect_parameters(SupernetModel& model, ParamSet set);

// Visits every parameterized block of the model in canonical order with a
// stable path name ("cell2/edge7/sep_conv_3x3").
void for_each_block(SupernetModel& model,
                    const std::function<void(const std::string&, PrimitiveBlock&)>& fn);
void for_each_op(SupernetModel& model, const std::function<void(Cell&, Edge&, CandidateOp&)>& fn);

// Trainable parameters excluding pruner weights; unused aligners excluded.
std::size_t parameter_count(const SupernetModel& model);
std::size_t buffer_count(const SupernetModel& model);
std::size_t pruner_count(const SupernetModel& model);

}  // namespace spidernet
