#include "spidernet/genotype.hpp"

#include "spidernet/errors.hpp"

namespace spidernet {

namespace {

std::string_view node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::kInput:
      return "input";
    case NodeKind::kIntermediate:
      return "intermediate";
    case NodeKind::kOutput:
      return "output";
  }
  return "intermediate";
}

NodeKind node_kind_from(const std::string& s) {
  if (s == "input") return NodeKind::kInput;
  if (s == "intermediate") return NodeKind::kIntermediate;
  if (s == "output") return NodeKind::kOutput;
  throw FormatError("genotype: unknown node kind '" + s + "'");
}

template <typename T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(std::string("genotype: missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("genotype: bad field '") + key + "': " + e.what());
  }
}

}  // namespace

nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"reductions", c.reductions}, {"init_channels", c.init_channels},
          {"input_channels", c.input_channels}, {"image_size", c.image_size},
          {"classes", c.classes}, {"dropout", c.dropout}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.reductions = field<int>(j, "reductions");
  c.init_channels = field<int>(j, "init_channels");
  c.input_channels = field<int>(j, "input_channels");
  c.image_size = field<int>(j, "image_size");
  c.classes = field<int>(j, "classes");
  c.dropout = field<double>(j, "dropout");
  return c;
}

Genotype to_genotype(const SupernetModel& model) {
  nlohmann::json cells = nlohmann::json::array();
  for (const Cell& cell : model.cells) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const Node& n : cell.nodes) {
      nlohmann::json jn = {{"id", n.id.value}, {"kind", node_kind_name(n.kind)}};
      if (n.kind == NodeKind::kInput) {
        jn["source"] = n.source ? nlohmann::json(n.source->value) : nlohmann::json("stem");
      }
      nodes.push_back(std::move(jn));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const Edge& e : cell.edges) {
      nlohmann::json ops = nlohmann::json::array();
      for (const CandidateOp& op : e.ops) {
        ops.push_back({{"kind", kind_name(op.kind)}, {"pruner_weight", op.pruner.w()}});
      }
      edges.push_back({{"id", e.id.value}, {"from", e.from.value}, {"to", e.to.value},
                       {"ops", std::move(ops)}});
    }
    cells.push_back({{"id", cell.id.value},
                     {"kind", cell.kind == CellKind::kNormal ? "normal" : "reduction"},
                     {"channels", cell.channels},
                     {"scale", cell.scale},
                     {"nodes", std::move(nodes)},
                     {"edges", std::move(edges)}});
  }
  return {{"format", kGenotypeFormat},
          {"config", model_config_json(model.config)},
          {"next_ids",
           {{"node", model.next_node}, {"edge", model.next_edge}, {"cell", model.next_cell}}},
          {"cells", std::move(cells)}};
}

std::string serialize_genotype(const SupernetModel& model) {
  return to_genotype(model).dump(2) + "\n";
}

SupernetModel from_genotype(const Genotype& g, std::mt19937_64& rng) {
  if (!g.is_object() || !g.contains("format") || !g["format"].is_string() ||
      g["format"].get<std::string>() != kGenotypeFormat) {
    throw FormatError("genotype: unsupported format version (expected " +
                      std::string(kGenotypeFormat) + ")");
  }
  SupernetModel m;
  m.config = model_config_from_json(field<nlohmann::json>(g, "config"));
  const auto next = field<nlohmann::json>(g, "next_ids");
  m.next_node = field<std::uint32_t>(next, "node");
  m.next_edge = field<std::uint32_t>(next, "edge");
  m.next_cell = field<std::uint32_t>(next, "cell");

  const ModelConfig& cfg = m.config;
  if (cfg.init_channels < 1 || cfg.input_channels < 1 || cfg.classes < 2 || cfg.reductions < 1) {
    throw FormatError("genotype: invalid config echo");
  }
  m.stem = make_block(PrimitiveKind::kStemConv3x3, cfg.input_channels, cfg.init_channels, rng);
  m.stem_bn = make_block(PrimitiveKind::kBatchNorm, cfg.init_channels, cfg.init_channels, rng);

  for (const auto& jc : field<nlohmann::json>(g, "cells")) {
    Cell cell;
    cell.id = CellId{field<std::uint32_t>(jc, "id")};
    const auto kind = field<std::string>(jc, "kind");
    if (kind != "normal" && kind != "reduction") throw FormatError("genotype: bad cell kind");
    cell.kind = kind == "normal" ? CellKind::kNormal : CellKind::kReduction;
    cell.channels = field<int>(jc, "channels");
    cell.scale = field<int>(jc, "scale");
    if (cell.channels < 1 || cell.scale < 0) throw FormatError("genotype: bad cell shape");
    for (const auto& jn : field<nlohmann::json>(jc, "nodes")) {
      Node n;
      n.id = NodeId{field<std::uint32_t>(jn, "id")};
      n.kind = node_kind_from(field<std::string>(jn, "kind"));
      if (n.kind == NodeKind::kInput) {
        const auto& src = jn.at("source");
        if (src.is_string()) {
          if (src.get<std::string>() != "stem") throw FormatError("genotype: bad input source");
        } else {
          n.source = CellId{field<std::uint32_t>(jn, "source")};
        }
      }
      cell.nodes.push_back(n);
    }
    for (const Node& n : cell.nodes) {
      if (n.kind != NodeKind::kInput) continue;
      const SourceShape src = source_shape(m, n);
      cell.aligners.push_back(make_aligner(n.id, src.channels, src.scale, cell, rng));
    }
    for (const auto& je : field<nlohmann::json>(jc, "edges")) {
      Edge e;
      e.id = EdgeId{field<std::uint32_t>(je, "id")};
      e.from = NodeId{field<std::uint32_t>(je, "from")};
      e.to = NodeId{field<std::uint32_t>(je, "to")};
      for (const auto& jo : field<nlohmann::json>(je, "ops")) {
        const auto name = field<std::string>(jo, "kind");
        const auto kind = kind_from_name(name);
        if (!kind || !is_searchable(*kind)) {
          throw FormatError("genotype: unknown operation '" + name + "'");
        }
        CandidateOp op = make_candidate_op(*kind, cell.channels, rng);
        op.pruner.set_w(field<double>(jo, "pruner_weight"));
        e.ops.push_back(std::move(op));
      }
      cell.edges.push_back(std::move(e));
    }
    m.cells.push_back(std::move(cell));
  }
  if (m.cells.empty()) throw FormatError("genotype: no cells");
  m.classifier = make_block(PrimitiveKind::kLinearClassifier, m.cells.back().channels,
                            cfg.classes, rng);
  try {
    validate(m);
  } catch (const StructuralError& e) {
    throw FormatError(std::string("genotype: ") + e.what());
  }
  return m;
}

SupernetModel parse_genotype(std::string_view text, std::mt19937_64& rng) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("genotype: ") + e.what());
  }
  return from_genotype(j, rng);
}

bool structurally_equal(const SupernetModel& a, const SupernetModel& b) {
  return to_genotype(a) == to_genotype(b);
}

}  // namespace spidernet
