#include "spidernet/pruning.hpp"

#include <algorithm>
#include <set>

#include "spidernet/errors.hpp"

namespace spidernet {

namespace {

using EdgePairs = std::vector<std::pair<NodeId, NodeId>>;

std::set<NodeId> forward_from(const EdgePairs& edges, const std::vector<NodeId>& starts) {
  std::set<NodeId> seen(starts.begin(), starts.end());
  std::vector<NodeId> stack(starts.begin(), starts.end());
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    for (const auto& [from, to] : edges) {
      if (from == n && seen.insert(to).second) stack.push_back(to);
    }
  }
  return seen;
}

std::set<NodeId> backward_from(const EdgePairs& edges, NodeId target) {
  std::set<NodeId> seen{target};
  std::vector<NodeId> stack{target};
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    for (const auto& [from, to] : edges) {
      if (to == n && seen.insert(from).second) stack.push_back(from);
    }
  }
  return seen;
}

EdgePairs skeleton(const Cell& cell, EdgeId skip) {
  EdgePairs pairs;
  for (const Edge& e : cell.edges) {
    if (e.id != skip) pairs.emplace_back(e.from, e.to);
  }
  return pairs;
}

}  // namespace

void set_usage_window(SupernetModel& model, std::size_t batches_per_epoch) {
  const std::size_t capacity = batches_per_epoch * kDeadheadWindowEpochs;
  for_each_op(model, [capacity](Cell&, Edge&, CandidateOp& op) {
    op.pruner.off_history.set_capacity(capacity);
  });
}

void record_usage(Edge& edge) {
  for (CandidateOp& op : edge.ops) op.pruner.off_history.push(op.pruner.gate_off());
}

void record_usage(SupernetModel& model) {
  for (Cell& cell : model.cells) {
    for (Edge& e : cell.edges) record_usage(e);
  }
}

RemovalOutcome remove_op(SupernetModel& model, EdgeId edge_id, std::size_t index) {
  Cell* cell = model.cell_of(edge_id);
  if (cell == nullptr) {
    throw StructuralError("remove_op: edge " + std::to_string(edge_id.value) + " not found");
  }
  Edge* edge = cell->find_edge(edge_id);
  if (index >= edge->ops.size()) throw StructuralError("remove_op: op index out of range");

  RemovalOutcome outcome;
  if (edge->ops.size() > 1) {
    edge->ops.erase(edge->ops.begin() + static_cast<std::ptrdiff_t>(index));
    outcome.removed = true;
    return outcome;
  }

  // The edge empties: make sure the output survives without it.
  const EdgePairs remaining = skeleton(*cell, edge_id);
  const auto fwd = forward_from(remaining, cell->input_nodes());
  const NodeId output = cell->output_node();
  if (!fwd.contains(output)) return outcome;

  const auto bwd = backward_from(remaining, output);
  std::set<NodeId> stranded;
  for (const Node& n : cell->nodes) {
    if (n.kind == NodeKind::kIntermediate && (!fwd.contains(n.id) || !bwd.contains(n.id))) {
      stranded.insert(n.id);
    }
  }

  std::erase_if(cell->edges, [edge_id](const Edge& e) { return e.id == edge_id; });
  std::erase_if(cell->edges, [&](const Edge& e) {
    if (!stranded.contains(e.from) && !stranded.contains(e.to)) return false;
    for (const CandidateOp& op : e.ops) {
      outcome.collateral.push_back(DeadheadRecord{0, 0, e.id, op.kind,
                                                  op.pruner.off_history.off_fraction(), true});
    }
    return true;
  });
  std::erase_if(cell->nodes, [&](const Node& n) { return stranded.contains(n.id); });
  outcome.removed = true;
  return outcome;
}

DeadheadResult deadhead_pass(SupernetModel& model, int cycle, int epoch, double threshold) {
  struct Pending {
    EdgeId edge;
    PrimitiveKind kind;
    double off_fraction;
  };
  std::vector<Pending> pending;
  for_each_op(model, [&](Cell&, Edge& e, CandidateOp& op) {
    const UsageHistory& h = op.pruner.off_history;
    if (h.full() && h.off_fraction() > threshold) {
      pending.push_back({e.id, op.kind, h.off_fraction()});
    }
  });

  DeadheadResult result;
  std::vector<DeadheadRecord> collateral;
  for (const Pending& p : pending) {
    Edge* e = model.find_edge(p.edge);
    if (e == nullptr) continue;  // already stranded by an earlier deletion
    auto it = std::find_if(e->ops.begin(), e->ops.end(),
                           [&p](const CandidateOp& op) { return op.kind == p.kind; });
    if (it == e->ops.end()) continue;
    RemovalOutcome out =
        remove_op(model, p.edge, static_cast<std::size_t>(it - e->ops.begin()));
    if (!out.removed) {
      ++result.suppressed;
      continue;
    }
    ++result.deleted;
    result.records.push_back(DeadheadRecord{cycle, epoch, p.edge, p.kind, p.off_fraction, false});
    for (DeadheadRecord& c : out.collateral) {
      c.cycle = cycle;
      c.epoch = epoch;
      collateral.push_back(c);
    }
  }
  result.records.insert(result.records.end(), collateral.begin(), collateral.end());
  if (result.deleted > 0) validate(model);
  return result;
}

}  // namespace spidernet
