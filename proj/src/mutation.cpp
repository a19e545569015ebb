#include "spidernet/mutation.hpp"

#include "spidernet/errors.hpp"

namespace spidernet {

MutationResult triangular_mutate(SupernetModel& model, EdgeId edge_id, std::mt19937_64& rng) {
  Cell* cell = model.cell_of(edge_id);
  if (cell == nullptr) {
    throw StructuralError("triangular_mutate: edge " + std::to_string(edge_id.value) +
                          " not found in any cell");
  }
  const Edge& target = *cell->find_edge(edge_id);
  const NodeId a = target.from;
  const NodeId b = target.to;

  MutationResult r;
  r.cell = cell->id;
  r.mutated = edge_id;
  r.new_node = model.allocate_node();
  r.into_new = model.allocate_edge();
  r.out_of_new = model.allocate_edge();
  cell->nodes.push_back(Node{r.new_node, NodeKind::kIntermediate, std::nullopt});
  cell->edges.push_back(make_full_edge(r.into_new, a, r.new_node, cell->channels, rng));
  cell->edges.push_back(make_full_edge(r.out_of_new, r.new_node, b, cell->channels, rng));
  return r;
}

void reinit_weights(SupernetModel& model, std::mt19937_64& rng) {
  for_each_block(model, [&rng](const std::string&, PrimitiveBlock& b) { reinitialize(b, rng); });
  for_each_op(model, [&rng](Cell&, Edge&, CandidateOp& op) { op.pruner.reinitialize(rng); });
}

MemoryEstimate estimate_memory(const PrimitiveBlock& block, Shape input, std::size_t batch) {
  MemoryEstimate m;
  m.parameter_bytes = kBytesPerValue * (parameter_count(block) + buffer_count(block));
  m.activation_bytes = kBytesPerValue * batch * activation_elements(block, input) * 2;
  return m;
}

MemoryEstimate estimate_memory(const CandidateOp& op, int channels, int extent,
                               std::size_t batch) {
  return estimate_memory(op.block, Shape{1, channels, extent, extent}, batch);
}

MemoryEstimate estimate_memory(const Edge& edge, int channels, int extent, std::size_t batch) {
  MemoryEstimate m;
  const std::size_t plane = static_cast<std::size_t>(channels) * extent * extent;
  for (const CandidateOp& op : edge.ops) {
    m += estimate_memory(op, channels, extent, batch);
    m.parameter_bytes += kBytesPerValue;  // pruner weight
    m.activation_bytes += kBytesPerValue * batch * plane * 2;
  }
  if (edge.ops.size() > 1) m.activation_bytes += kBytesPerValue * batch * plane * 2;
  return m;
}

MemoryEstimate full_edge_estimate(const SupernetModel& model, const Cell& cell,
                                  std::size_t batch) {
  MemoryEstimate m;
  const int extent = model.cell_extent(cell);
  const std::size_t plane = static_cast<std::size_t>(cell.channels) * extent * extent;
  std::mt19937_64 scratch(0);
  for (PrimitiveKind kind : kSearchableKinds) {
    const PrimitiveBlock block = make_block(kind, cell.channels, cell.channels, scratch);
    m += estimate_memory(block, Shape{1, cell.channels, extent, extent}, batch);
    m.parameter_bytes += kBytesPerValue;
    m.activation_bytes += kBytesPerValue * batch * plane * 2;
  }
  m.activation_bytes += kBytesPerValue * batch * plane * 2;
  return m;
}

MemoryEstimate estimate_memory(const SupernetModel& model, std::size_t batch) {
  const ModelConfig& cfg = model.config;
  const Shape input{1, cfg.input_channels, cfg.image_size, cfg.image_size};
  MemoryEstimate m = estimate_memory(model.stem, input, batch);
  const Shape stem_out = output_shape(model.stem, input);
  m += estimate_memory(model.stem_bn, stem_out, batch);
  for (const Cell& cell : model.cells) {
    const int extent = model.cell_extent(cell);
    for (const InputAligner& a : cell.aligners) {
      if (!cell.has_outgoing(a.node)) continue;
      const SourceShape src = source_shape(model, *cell.find_node(a.node));
      Shape s{1, src.channels, cfg.image_size >> src.scale, cfg.image_size >> src.scale};
      for (const PrimitiveBlock& fr : a.reduce) {
        m += estimate_memory(fr, s, batch);
        s = output_shape(fr, s);
      }
      m += estimate_memory(a.projection, s, batch);
    }
    for (const Edge& e : cell.edges) m += estimate_memory(e, cell.channels, extent, batch);
  }
  const Cell& last = model.cells.back();
  const int extent = model.cell_extent(last);
  const Shape last_out{1, last.channels, extent, extent};
  m.activation_bytes += kBytesPerValue * batch * static_cast<std::size_t>(last.channels) * 2 * 2;
  m += estimate_memory(model.classifier, Shape{1, last_out.c, 1, 1}, batch);
  return m;
}

}  // namespace spidernet
