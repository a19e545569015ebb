#include "spidernet/supernet.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "spidernet/errors.hpp"

namespace spidernet {

namespace {

std::string cell_tag(const Cell& cell) { return "cell" + std::to_string(cell.id.value); }

// Forward reachability from `starts` following edges.
std::set<NodeId> reach_forward(const Cell& cell, const std::vector<NodeId>& starts) {
  std::set<NodeId> seen(starts.begin(), starts.end());
  std::vector<NodeId> stack(starts.begin(), starts.end());
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    for (const Edge& e : cell.edges) {
      if (e.from == n && seen.insert(e.to).second) stack.push_back(e.to);
    }
  }
  return seen;
}

std::set<NodeId> reach_backward(const Cell& cell, NodeId target) {
  std::set<NodeId> seen{target};
  std::vector<NodeId> stack{target};
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    for (const Edge& e : cell.edges) {
      if (e.to == n && seen.insert(e.from).second) stack.push_back(e.from);
    }
  }
  return seen;
}

}  // namespace

const Node* Cell::find_node(NodeId id) const {
  for (const Node& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

Edge* Cell::find_edge(EdgeId id) {
  for (Edge& e : edges) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

const Edge* Cell::find_edge(EdgeId id) const {
  return const_cast<Cell*>(this)->find_edge(id);
}

const InputAligner* Cell::aligner_for(NodeId id) const {
  for (const InputAligner& a : aligners) {
    if (a.node == id) return &a;
  }
  return nullptr;
}

NodeId Cell::output_node() const {
  for (const Node& n : nodes) {
    if (n.kind == NodeKind::kOutput) return n.id;
  }
  throw StructuralError(cell_tag(*this) + " has no output node");
}

std::vector<NodeId> Cell::input_nodes() const {
  std::vector<NodeId> ids;
  for (const Node& n : nodes) {
    if (n.kind == NodeKind::kInput) ids.push_back(n.id);
  }
  return ids;
}

bool Cell::has_outgoing(NodeId id) const {
  return std::any_of(edges.begin(), edges.end(), [id](const Edge& e) { return e.from == id; });
}

Cell* SupernetModel::cell_of(EdgeId edge) {
  for (Cell& c : cells) {
    if (c.find_edge(edge) != nullptr) return &c;
  }
  return nullptr;
}

const Cell* SupernetModel::cell_of(EdgeId edge) const {
  return const_cast<SupernetModel*>(this)->cell_of(edge);
}

Edge* SupernetModel::find_edge(EdgeId edge) {
  Cell* c = cell_of(edge);
  return c == nullptr ? nullptr : c->find_edge(edge);
}

const Edge* SupernetModel::find_edge(EdgeId edge) const {
  return const_cast<SupernetModel*>(this)->find_edge(edge);
}

std::size_t SupernetModel::node_count() const {
  std::size_t n = 0;
  for (const Cell& c : cells) n += c.nodes.size();
  return n;
}

std::size_t SupernetModel::edge_count() const {
  std::size_t n = 0;
  for (const Cell& c : cells) n += c.edges.size();
  return n;
}

std::size_t SupernetModel::op_count() const {
  std::size_t n = 0;
  for (const Cell& c : cells) {
    for (const Edge& e : c.edges) n += e.ops.size();
  }
  return n;
}

std::vector<EdgeId> SupernetModel::edge_ids() const {
  std::vector<EdgeId> ids;
  for (const Cell& c : cells) {
    for (const Edge& e : c.edges) ids.push_back(e.id);
  }
  return ids;
}

int SupernetModel::cell_extent(const Cell& cell) const {
  return config.image_size >> cell.scale;
}

CandidateOp make_candidate_op(PrimitiveKind kind, int channels, std::mt19937_64& rng) {
  CandidateOp op;
  op.kind = kind;
  op.block = make_block(kind, channels, channels, rng);
  op.pruner.reinitialize(rng);
  return op;
}

Edge make_full_edge(EdgeId id, NodeId from, NodeId to, int channels, std::mt19937_64& rng) {
  Edge e{id, from, to, {}, false};
  e.ops.reserve(kSearchableKinds.size());
  for (PrimitiveKind kind : kSearchableKinds) e.ops.push_back(make_candidate_op(kind, channels, rng));
  return e;
}

InputAligner make_aligner(NodeId node, int source_channels, int source_scale, const Cell& target,
                          std::mt19937_64& rng) {
  if (source_scale > target.scale) {
    throw StructuralError("source at scale " + std::to_string(source_scale) +
                          " is smaller than " + cell_tag(target) + " at scale " +
                          std::to_string(target.scale));
  }
  InputAligner a;
  a.node = node;
  for (int s = source_scale; s < target.scale; ++s) {
    a.reduce.push_back(
        make_block(PrimitiveKind::kFactorizedReduce, source_channels, source_channels, rng));
  }
  a.projection = make_block(PrimitiveKind::kConv1x1, source_channels, target.channels, rng);
  return a;
}

SourceShape source_shape(const SupernetModel& model, const Node& input) {
  if (!input.source) return {model.config.init_channels, 0};
  for (const Cell& c : model.cells) {
    if (c.id == *input.source) return {c.channels, c.scale};
  }
  throw StructuralError("input node " + std::to_string(input.id.value) +
                        " refers to unknown cell " + std::to_string(input.source->value));
}

SupernetModel init_minimum_viable_model(const ModelConfig& config, std::mt19937_64& rng) {
  if (config.reductions < 1) throw ConfigError("reductions must be >= 1");
  if (config.init_channels < 1) throw ConfigError("init_channels must be >= 1");
  if (config.classes < 2) throw ConfigError("classes must be >= 2");
  if (config.input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if ((config.image_size >> config.reductions) < 1 ||
      config.image_size % (1 << config.reductions) != 0) {
    throw ConfigError("image size " + std::to_string(config.image_size) + " cannot be halved " +
                      std::to_string(config.reductions) + " times");
  }
  if (config.dropout < 0.0 || config.dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");

  SupernetModel m;
  m.config = config;
  m.stem = make_block(PrimitiveKind::kStemConv3x3, config.input_channels, config.init_channels, rng);
  m.stem_bn = make_block(PrimitiveKind::kBatchNorm, config.init_channels, config.init_channels, rng);

  for (int i = 0; i <= config.reductions; ++i) {
    Cell cell;
    cell.id = CellId{m.next_cell++};
    cell.kind = i == 0 ? CellKind::kNormal : CellKind::kReduction;
    cell.channels = config.init_channels << i;
    cell.scale = i;

    std::vector<NodeId> inputs;
    {
      Node n{m.allocate_node(), NodeKind::kInput, std::nullopt};
      cell.nodes.push_back(n);
      inputs.push_back(n.id);
    }
    for (int j = 0; j < i; ++j) {
      Node n{m.allocate_node(), NodeKind::kInput, m.cells[j].id};
      cell.nodes.push_back(n);
      inputs.push_back(n.id);
    }
    const Node mid{m.allocate_node(), NodeKind::kIntermediate, std::nullopt};
    const Node out{m.allocate_node(), NodeKind::kOutput, std::nullopt};
    cell.nodes.push_back(mid);
    cell.nodes.push_back(out);

    for (NodeId in : inputs) {
      const SourceShape src = source_shape(m, *cell.find_node(in));
      cell.aligners.push_back(make_aligner(in, src.channels, src.scale, cell, rng));
    }
    for (NodeId in : inputs) {
      cell.edges.push_back(make_full_edge(m.allocate_edge(), in, mid.id, cell.channels, rng));
    }
    cell.edges.push_back(make_full_edge(m.allocate_edge(), mid.id, out.id, cell.channels, rng));
    m.cells.push_back(std::move(cell));
  }

  const int last_channels = m.cells.back().channels;
  m.classifier =
      make_block(PrimitiveKind::kLinearClassifier, last_channels, config.classes, rng);
  validate(m);
  return m;
}

Var align_input_preprocess(Tape& tape, Var source, InputAligner& aligner) {
  Var h = source;
  for (PrimitiveBlock& fr : aligner.reduce) h = apply_primitive(tape, h, fr);
  return apply_primitive(tape, h, aligner.projection);
}

std::vector<NodeId> topological_order(const Cell& cell) {
  std::map<NodeId, int> indegree;
  for (const Node& n : cell.nodes) indegree[n.id] = 0;
  for (const Edge& e : cell.edges) ++indegree[e.to];
  std::vector<NodeId> ready;
  for (const Node& n : cell.nodes) {
    if (indegree[n.id] == 0) ready.push_back(n.id);
  }
  std::vector<NodeId> order;
  while (!ready.empty()) {
    // Lowest id first keeps evaluation order deterministic.
    auto it = std::min_element(ready.begin(), ready.end());
    const NodeId n = *it;
    ready.erase(it);
    order.push_back(n);
    for (const Edge& e : cell.edges) {
      if (e.from == n && --indegree[e.to] == 0) ready.push_back(e.to);
    }
  }
  return order;
}

bool cell_is_acyclic(const Cell& cell) { return topological_order(cell).size() == cell.nodes.size(); }

bool output_reachable(const Cell& cell) {
  const auto reached = reach_forward(cell, cell.input_nodes());
  return reached.contains(cell.output_node());
}

Var model_forward(SupernetModel& model, Tape& tape, Var batch) {
  const Shape in = tape.value(batch).shape;
  if (in.c != model.config.input_channels || in.h != model.config.image_size ||
      in.w != model.config.image_size) {
    throw StructuralError("model expects input (n," + std::to_string(model.config.input_channels) +
                          "," + std::to_string(model.config.image_size) + "," +
                          std::to_string(model.config.image_size) + "), got " + in.str());
  }
  Var stem = apply_primitive(tape, batch, model.stem);
  stem = apply_primitive(tape, stem, model.stem_bn);

  std::map<CellId, Var> cell_outputs;
  Var last = stem;
  for (Cell& cell : model.cells) {
    std::map<NodeId, std::vector<Var>> inbound;
    std::map<NodeId, Var> values;
    for (NodeId nid : topological_order(cell)) {
      const Node& node = *cell.find_node(nid);
      Var value;
      if (node.kind == NodeKind::kInput) {
        if (!cell.has_outgoing(nid)) continue;
        const Var src = node.source ? cell_outputs.at(*node.source) : stem;
        auto it = std::find_if(cell.aligners.begin(), cell.aligners.end(),
                               [nid](const InputAligner& a) { return a.node == nid; });
        if (it == cell.aligners.end()) {
          throw StructuralError(cell_tag(cell) + ": input node without aligner");
        }
        value = align_input_preprocess(tape, src, *it);
      } else {
        auto it = inbound.find(nid);
        if (it == inbound.end() || it->second.empty()) {
          if (node.kind == NodeKind::kOutput) {
            throw StructuralError(cell_tag(cell) + ": output node unreachable from inputs");
          }
          continue;
        }
        value = ops::add(tape, it->second);
      }
      values[nid] = value;
      for (Edge& e : cell.edges) {
        if (e.from != nid || e.ops.empty()) continue;
        std::vector<Var> terms;
        terms.reserve(e.ops.size());
        for (CandidateOp& op : e.ops) {
          Var y = apply_primitive(tape, value, op.block);
          terms.push_back(pruner_apply(tape, y, op.pruner));
        }
        Var out = ops::add(tape, terms);
        if (e.disconnected) out = ops::scale(tape, out, 0.0);
        inbound[e.to].push_back(out);
      }
    }
    auto out_it = values.find(cell.output_node());
    if (out_it == values.end()) {
      throw StructuralError(cell_tag(cell) + ": output node unreachable from inputs");
    }
    cell_outputs[cell.id] = out_it->second;
    last = out_it->second;
  }

  Var pooled = ops::global_avg_pool(tape, last);
  pooled = ops::dropout(tape, pooled, model.config.dropout);
  return apply_primitive(tape, pooled, model.classifier);
}

Tensor model_logits(SupernetModel& model, const Tensor& batch, Mode mode) {
  Tape tape(mode);
  tape.update_running_stats = false;
  Var logits = model_forward(model, tape, tape.constant(batch));
  return tape.value(logits);
}

void validate(const SupernetModel& model) {
  if (static_cast<int>(model.cells.size()) != model.config.reductions + 1) {
    throw StructuralError("expected " + std::to_string(model.config.reductions + 1) +
                          " cells, found " + std::to_string(model.cells.size()));
  }
  std::set<NodeId> all_nodes;
  std::set<EdgeId> all_edges;
  for (std::size_t i = 0; i < model.cells.size(); ++i) {
    const Cell& cell = model.cells[i];
    const std::string tag = cell_tag(cell);
    const CellKind expected = i == 0 ? CellKind::kNormal : CellKind::kReduction;
    if (cell.kind != expected) throw StructuralError(tag + ": wrong cell kind for position");
    std::size_t outputs = 0;
    std::size_t inputs = 0;
    for (const Node& n : cell.nodes) {
      if (!all_nodes.insert(n.id).second) {
        throw StructuralError("node id " + std::to_string(n.id.value) + " used twice");
      }
      if (n.kind == NodeKind::kOutput) ++outputs;
      if (n.kind == NodeKind::kInput) {
        ++inputs;
        if (cell.aligner_for(n.id) == nullptr) throw StructuralError(tag + ": input lacks aligner");
      }
    }
    if (outputs != 1) throw StructuralError(tag + ": expected exactly one output node");
    if (inputs != i + 1) {
      throw StructuralError(tag + ": expected " + std::to_string(i + 1) + " input nodes, found " +
                            std::to_string(inputs));
    }
    std::set<std::pair<NodeId, NodeId>> pairs;
    for (const Edge& e : cell.edges) {
      const std::string etag = tag + "/edge" + std::to_string(e.id.value);
      if (!all_edges.insert(e.id).second) throw StructuralError(etag + ": edge id used twice");
      const Node* from = cell.find_node(e.from);
      const Node* to = cell.find_node(e.to);
      if (from == nullptr || to == nullptr) throw StructuralError(etag + ": endpoint outside cell");
      if (e.from == e.to) throw StructuralError(etag + ": self loop");
      if (to->kind == NodeKind::kInput) throw StructuralError(etag + ": edge into an input node");
      if (from->kind == NodeKind::kOutput) throw StructuralError(etag + ": edge out of output node");
      if (e.ops.empty()) throw StructuralError(etag + ": edge without operations");
      if (!pairs.insert({e.from, e.to}).second) throw StructuralError(etag + ": duplicate edge");
      for (const CandidateOp& op : e.ops) {
        if (!is_searchable(op.kind) || op.block.kind != op.kind ||
            op.block.in_channels != cell.channels) {
          throw StructuralError(etag + ": malformed operation " + std::string(kind_name(op.kind)));
        }
      }
    }
    if (!cell_is_acyclic(cell)) throw StructuralError(tag + ": edge relation has a cycle");
    const auto fwd = reach_forward(cell, cell.input_nodes());
    const auto bwd = reach_backward(cell, cell.output_node());
    if (!fwd.contains(cell.output_node())) {
      throw StructuralError(tag + ": output unreachable from every input");
    }
    for (const Node& n : cell.nodes) {
      if (n.kind != NodeKind::kIntermediate) continue;
      if (!fwd.contains(n.id) || !bwd.contains(n.id)) {
        throw StructuralError(tag + ": intermediate node " + std::to_string(n.id.value) +
                              " is not on an input-to-output path");
      }
    }
  }
}

void for_each_block(SupernetModel& model,
                    const std::function<void(const std::string&, PrimitiveBlock&)>& fn) {
  fn("stem/conv", model.stem);
  fn("stem/bn", model.stem_bn);
  for (Cell& cell : model.cells) {
    const std::string tag = cell_tag(cell);
    for (InputAligner& a : cell.aligners) {
      const std::string atag = tag + "/input" + std::to_string(a.node.value);
      for (std::size_t k = 0; k < a.reduce.size(); ++k) {
        fn(atag + "/reduce" + std::to_string(k), a.reduce[k]);
      }
      fn(atag + "/projection", a.projection);
    }
    for (Edge& e : cell.edges) {
      const std::string etag = tag + "/edge" + std::to_string(e.id.value);
      for (CandidateOp& op : e.ops) fn(etag + "/" + std::string(kind_name(op.kind)), op.block);
    }
  }
  fn("head/linear", model.classifier);
}

void for_each_op(SupernetModel& model, const std::function<void(Cell&, Edge&, CandidateOp&)>& fn) {
  for (Cell& cell : model.cells) {
    for (Edge& e : cell.edges) {
      for (CandidateOp& op : e.ops) fn(cell, e, op);
    }
  }
}

std::vector<Param*> collect_parameters(SupernetModel& model, ParamSet set) {
  std::vector<Param*> out;
  if (set != ParamSet::kPruners) {
    for_each_block(model, [&out](const std::string&, PrimitiveBlock& b) {
      for (Param& p : b.params) out.push_back(&p);
    });
  }
  if (set != ParamSet::kFunction) {
    for_each_op(model, [&out](Cell&, Edge&, CandidateOp& op) { out.push_back(&op.pruner.weight); });
  }
  return out;
}

namespace {

template <typename Count>
std::size_t sum_live_blocks(const SupernetModel& model, Count count) {
  std::size_t n = count(model.stem) + count(model.stem_bn) + count(model.classifier);
  for (const Cell& cell : model.cells) {
    for (const InputAligner& a : cell.aligners) {
      if (!cell.has_outgoing(a.node)) continue;
      for (const PrimitiveBlock& b : a.reduce) n += count(b);
      n += count(a.projection);
    }
    for (const Edge& e : cell.edges) {
      for (const CandidateOp& op : e.ops) n += count(op.block);
    }
  }
  return n;
}

}  // namespace

std::size_t parameter_count(const SupernetModel& model) {
  return sum_live_blocks(model, [](const PrimitiveBlock& b) { return parameter_count(b); });
}

std::size_t buffer_count(const SupernetModel& model) {
  return sum_live_blocks(model, [](const PrimitiveBlock& b) { return buffer_count(b); });
}

std::size_t pruner_count(const SupernetModel& model) { return model.op_count(); }

}  // namespace spidernet
