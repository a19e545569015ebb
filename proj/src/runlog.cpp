#include "spidernet/runlog.hpp"

#include <cmath>
#include <limits>

#include "spidernet/errors.hpp"

namespace spidernet {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(std::string("runlog: missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("runlog: bad field '") + key + "': " + e.what());
  }
}

json id_or_null(const std::optional<EdgeId>& e) { return e ? json(e->value) : json(nullptr); }

DeletionCause cause_from_name(const std::string& s) {
  if (s == "pruner") return DeletionCause::kPruner;
  if (s == "collateral") return DeletionCause::kCollateral;
  if (s == "random") return DeletionCause::kRandom;
  throw FormatError("runlog: unknown deletion cause '" + s + "'");
}

json metric_json(const MetricPair& m) {
  return json{{"kappa", kappa_json(m.ntk_condition)}, {"lrc", m.lrc}};
}

MetricPair metric_from_json(const json& j) {
  return MetricPair{kappa_from_json(field<json>(j, "kappa")), field<std::size_t>(j, "lrc")};
}

}  // namespace

std::string_view cause_name(DeletionCause cause) {
  switch (cause) {
    case DeletionCause::kPruner: return "pruner";
    case DeletionCause::kCollateral: return "collateral";
    case DeletionCause::kRandom: return "random";
  }
  return "pruner";
}

json kappa_json(double kappa) {
  if (std::isinf(kappa)) return "inf";
  return kappa;
}

double kappa_from_json(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (!j.is_number()) throw FormatError("runlog: kappa must be a number or \"inf\"");
  return j.get<double>();
}

std::size_t RunLog::attempted_mutations() const { return mutations.size(); }

std::size_t RunLog::applied_mutations() const {
  std::size_t n = 0;
  for (const MutationRecord& m : mutations) n += m.applied ? 1 : 0;
  return n;
}

json to_json_untimed(const RunLog& log) {
  json j;
  j["format"] = kRunLogFormat;
  j["variant"] = log.variant;
  j["seed"] = log.seed;
  j["config"] = log.config;
  j["dataset"] = log.dataset;
  j["attempts_per_cycle"] = log.attempts_per_cycle;
  j["cycle_deadheads"] = log.cycle_deadheads;
  j["final_deadheads"] = log.final_deadheads;

  json muts = json::array();
  for (const MutationRecord& m : log.mutations) {
    json r{{"cycle", m.cycle},   {"attempt", m.attempt}, {"edge", id_or_null(m.edge)},
           {"applied", m.applied}, {"memory_bytes_after", m.memory_bytes_after}};
    if (m.applied) {
      r["cell"] = m.cell.value;
      r["new_node"] = m.new_node.value;
      r["into_new"] = m.into_new.value;
      r["out_of_new"] = m.out_of_new.value;
    }
    muts.push_back(std::move(r));
  }
  j["mutations"] = std::move(muts);

  json sels = json::array();
  for (const SelectionRecord& s : log.selections) {
    json rows = json::array();
    for (const CandidateRow& c : s.candidates) {
      json r{{"edge", c.edge.value}, {"admitted", c.admitted}};
      if (c.error.empty()) {
        r["on"] = metric_json(c.on);
        r["off"] = metric_json(c.off);
      } else {
        r["error"] = c.error;
      }
      rows.push_back(std::move(r));
    }
    sels.push_back(json{{"cycle", s.cycle},
                        {"attempt", s.attempt},
                        {"candidates", std::move(rows)},
                        {"winner", s.winner ? json(*s.winner) : json(nullptr)},
                        {"model_bytes", s.model_bytes},
                        {"edge_bytes", s.edge_bytes},
                        {"budget_bytes", s.budget_bytes},
                        {"gate_passed", s.gate_passed}});
  }
  j["selections"] = std::move(sels);

  json dels = json::array();
  for (const DeletionRecord& d : log.deletions) {
    dels.push_back(json{{"cycle", d.op.cycle},
                        {"epoch", d.op.epoch},
                        {"edge", d.op.edge.value},
                        {"kind", kind_name(d.op.kind)},
                        {"off_fraction", d.op.off_fraction},
                        {"cause", cause_name(d.cause)},
                        {"refused", d.refused}});
  }
  j["deletions"] = std::move(dels);
  j["notes"] = log.notes;
  j["final"] = json{{"test_accuracy", log.final.test_accuracy},
                    {"parameter_count", log.final.parameter_count},
                    {"peak_memory_bytes", log.final.peak_memory_bytes},
                    {"final_memory_bytes", log.final.final_memory_bytes},
                    {"nodes", log.final.nodes},
                    {"edges", log.final.edges},
                    {"ops", log.final.ops}};
  return j;
}

json to_json(const RunLog& log) {
  json j = to_json_untimed(log);
  j["timing"] = json{{"search_seconds", log.timing.search_seconds},
                     {"final_seconds", log.timing.final_seconds},
                     {"total_seconds", log.timing.total_seconds}};
  return j;
}

std::string serialize_runlog(const RunLog& log) { return to_json(log).dump(2) + "\n"; }

RunLog runlog_from_json(const json& j) {
  if (field<std::string>(j, "format") != kRunLogFormat) {
    throw FormatError("runlog: unsupported format version (expected " +
                      std::string(kRunLogFormat) + ")");
  }
  RunLog log;
  log.variant = field<std::string>(j, "variant");
  log.seed = field<std::uint64_t>(j, "seed");
  log.config = field<json>(j, "config");
  log.dataset = field<json>(j, "dataset");
  log.attempts_per_cycle = field<std::vector<std::size_t>>(j, "attempts_per_cycle");
  log.cycle_deadheads = field<std::vector<std::size_t>>(j, "cycle_deadheads");
  log.final_deadheads = field<std::size_t>(j, "final_deadheads");

  for (const json& r : field<json>(j, "mutations")) {
    MutationRecord m;
    m.cycle = field<int>(r, "cycle");
    m.attempt = field<int>(r, "attempt");
    if (!r.contains("edge")) throw FormatError("runlog: missing field 'edge'");
    if (!r.at("edge").is_null()) m.edge = EdgeId{field<std::uint32_t>(r, "edge")};
    m.applied = field<bool>(r, "applied");
    m.memory_bytes_after = field<std::size_t>(r, "memory_bytes_after");
    if (m.applied) {
      m.cell = CellId{field<std::uint32_t>(r, "cell")};
      m.new_node = NodeId{field<std::uint32_t>(r, "new_node")};
      m.into_new = EdgeId{field<std::uint32_t>(r, "into_new")};
      m.out_of_new = EdgeId{field<std::uint32_t>(r, "out_of_new")};
    }
    log.mutations.push_back(m);
  }
  for (const json& s : field<json>(j, "selections")) {
    SelectionRecord rec;
    rec.cycle = field<int>(s, "cycle");
    rec.attempt = field<int>(s, "attempt");
    for (const json& c : field<json>(s, "candidates")) {
      CandidateRow row;
      row.edge = EdgeId{field<std::uint32_t>(c, "edge")};
      row.admitted = field<bool>(c, "admitted");
      if (c.contains("error")) {
        row.error = field<std::string>(c, "error");
      } else {
        row.on = metric_from_json(field<json>(c, "on"));
        row.off = metric_from_json(field<json>(c, "off"));
      }
      rec.candidates.push_back(row);
    }
    if (s.contains("winner") && !s.at("winner").is_null()) {
      rec.winner = field<std::size_t>(s, "winner");
    }
    rec.model_bytes = field<std::size_t>(s, "model_bytes");
    rec.edge_bytes = field<std::size_t>(s, "edge_bytes");
    rec.budget_bytes = field<std::size_t>(s, "budget_bytes");
    rec.gate_passed = field<bool>(s, "gate_passed");
    log.selections.push_back(std::move(rec));
  }
  for (const json& d : field<json>(j, "deletions")) {
    DeletionRecord rec;
    rec.op.cycle = field<int>(d, "cycle");
    rec.op.epoch = field<int>(d, "epoch");
    rec.op.edge = EdgeId{field<std::uint32_t>(d, "edge")};
    const auto kind = kind_from_name(field<std::string>(d, "kind"));
    if (!kind) throw FormatError("runlog: unknown op kind in deletion record");
    rec.op.kind = *kind;
    rec.op.off_fraction = field<double>(d, "off_fraction");
    rec.cause = cause_from_name(field<std::string>(d, "cause"));
    rec.op.collateral = rec.cause == DeletionCause::kCollateral;
    rec.refused = field<bool>(d, "refused");
    log.deletions.push_back(rec);
  }
  log.notes = field<std::vector<std::string>>(j, "notes");
  const json f = field<json>(j, "final");
  log.final.test_accuracy = field<double>(f, "test_accuracy");
  log.final.parameter_count = field<std::size_t>(f, "parameter_count");
  log.final.peak_memory_bytes = field<std::size_t>(f, "peak_memory_bytes");
  log.final.final_memory_bytes = field<std::size_t>(f, "final_memory_bytes");
  log.final.nodes = field<std::size_t>(f, "nodes");
  log.final.edges = field<std::size_t>(f, "edges");
  log.final.ops = field<std::size_t>(f, "ops");
  if (j.contains("timing")) {
    const json& t = j.at("timing");
    log.timing.search_seconds = field<double>(t, "search_seconds");
    log.timing.final_seconds = field<double>(t, "final_seconds");
    log.timing.total_seconds = field<double>(t, "total_seconds");
  }
  return log;
}

RunLog parse_runlog(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("runlog: ") + e.what());
  }
  return runlog_from_json(j);
}

}  // namespace spidernet
