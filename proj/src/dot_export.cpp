#include "spidernet/dot_export.hpp"

#include <sstream>

namespace spidernet {

std::string export_dot(const SupernetModel& model) {
  std::ostringstream os;
  os << "digraph spidernet {\n";
  os << "  rankdir=LR;\n";
  os << "  node [shape=circle, fontsize=10];\n";
  os << "  edge [fontsize=8];\n";
  for (const Cell& cell : model.cells) {
    const int extent = model.cell_extent(cell);
    os << "  subgraph cluster_cell" << cell.id.value << " {\n";
    os << "    label=\"cell " << cell.id.value << " ("
       << (cell.kind == CellKind::kNormal ? "normal" : "reduction") << ", " << cell.channels
       << "ch, " << extent << "x" << extent << ")\";\n";
    for (const Node& n : cell.nodes) {
      os << "    n" << n.id.value << " [";
      switch (n.kind) {
        case NodeKind::kInput:
          os << "label=\"" << (n.source ? "cell " + std::to_string(n.source->value) : "stem")
             << "\", style=filled, fillcolor=blue, fontcolor=white";
          break;
        case NodeKind::kIntermediate:
          os << "label=\"" << n.id.value << "\"";
          break;
        case NodeKind::kOutput:
          os << "label=\"out\", shape=doublecircle";
          break;
      }
      os << "];\n";
    }
    for (const Edge& e : cell.edges) {
      os << "    n" << e.from.value << " -> n" << e.to.value << " [label=\"";
      for (std::size_t i = 0; i < e.ops.size(); ++i) {
        if (i > 0) os << "\\n";
        os << kind_name(e.ops[i].kind);
      }
      os << "\"];\n";
    }
    os << "  }\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace spidernet
