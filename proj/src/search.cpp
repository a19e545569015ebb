#include "spidernet/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "spidernet/errors.hpp"
#include "spidernet/mutation.hpp"
#include "spidernet/optim.hpp"
#include "spidernet/pruning.hpp"

namespace spidernet {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0, Clock::time_point t1) {
  return std::chrono::duration<double>(t1 - t0).count();
}

template <typename T>
T config_field(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: bad field '") + key + "': " + e.what());
  }
}

void append_deadheads(const DeadheadResult& res, std::vector<DeletionRecord>& out) {
  for (const DeadheadRecord& r : res.records) {
    out.push_back(DeletionRecord{r, r.collateral ? DeletionCause::kCollateral
                                                 : DeletionCause::kPruner, false});
  }
}

void track_peak(RunLog& log, const SupernetModel& model, std::size_t batch) {
  log.final.peak_memory_bytes =
      std::max(log.final.peak_memory_bytes, estimate_memory(model, batch).total());
}

void check_budget(const SupernetModel& model, const SearchConfig& config) {
  const std::size_t bytes = estimate_memory(model, config.batch_size).total();
  if (bytes > config.vram_budget) {
    throw RunError("memory estimate " + std::to_string(bytes) + " exceeds budget " +
                   std::to_string(config.vram_budget));
  }
}

SupernetModel initial_model(const SearchConfig& config, const Dataset& data) {
  std::mt19937_64 rng = derive_stream(config.seed, "init");
  SupernetModel model = init_minimum_viable_model(model_config_for(config, data), rng);
  const std::size_t bytes = estimate_memory(model, config.batch_size).total();
  if (bytes >= config.vram_budget) {
    throw ConfigError("budget of " + std::to_string(config.vram_budget) +
                      " bytes does not fit the minimum viable model (" + std::to_string(bytes) +
                      " bytes)");
  }
  return model;
}

void finish(RunLog& log, SupernetModel& model, const SearchConfig& config, const Dataset& data) {
  log.final.test_accuracy = evaluate_accuracy(model, data);
  log.final.parameter_count = parameter_count(model);
  log.final.final_memory_bytes = estimate_memory(model, config.batch_size).total();
  track_peak(log, model, config.batch_size);
  log.final.nodes = model.node_count();
  log.final.edges = model.edge_count();
  log.final.ops = model.op_count();
}

RunLog start_log(const SearchConfig& config, const Dataset& data, std::string variant) {
  RunLog log;
  log.variant = std::move(variant);
  log.seed = config.seed;
  log.config = search_config_json(config);
  log.dataset = json{{"classes", data.classes},
                     {"image_size", data.image_size()},
                     {"train", data.train.size()},
                     {"test", data.test.size()}};
  return log;
}

}  // namespace

json search_config_json(const SearchConfig& c) {
  return json{{"reductions", c.reductions},
              {"init_channels", c.init_channels},
              {"vram_budget", c.vram_budget},
              {"cycles", c.cycles},
              {"mutations_per_cycle", c.mutations_per_cycle},
              {"epochs_per_cycle", c.epochs_per_cycle},
              {"train_epochs", c.train_epochs},
              {"n_good", c.n_good},
              {"batch_size", c.batch_size},
              {"base_lr", c.base_lr},
              {"dropout", c.dropout},
              {"seed", c.seed},
              {"probe_size", c.probe_size},
              {"lrc_samples", c.lrc_samples}};
}

SearchConfig search_config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("config: expected an object");
  SearchConfig c;
  c.reductions = config_field(j, "reductions", c.reductions);
  c.init_channels = config_field(j, "init_channels", c.init_channels);
  c.vram_budget = config_field(j, "vram_budget", c.vram_budget);
  c.cycles = config_field(j, "cycles", c.cycles);
  c.mutations_per_cycle = config_field(j, "mutations_per_cycle", c.mutations_per_cycle);
  c.epochs_per_cycle = config_field(j, "epochs_per_cycle", c.epochs_per_cycle);
  c.train_epochs = config_field(j, "train_epochs", c.train_epochs);
  c.n_good = config_field(j, "n_good", c.n_good);
  c.batch_size = config_field(j, "batch_size", c.batch_size);
  c.base_lr = config_field(j, "base_lr", c.base_lr);
  c.dropout = config_field(j, "dropout", c.dropout);
  c.seed = config_field(j, "seed", c.seed);
  c.probe_size = config_field(j, "probe_size", c.probe_size);
  c.lrc_samples = config_field(j, "lrc_samples", c.lrc_samples);
  return c;
}

void validate(const SearchConfig& c) {
  if (c.reductions < 1) throw ConfigError("reductions must be >= 1");
  if (c.init_channels < 1) throw ConfigError("channels must be >= 1");
  if (c.cycles < 1) throw ConfigError("cycles must be >= 1");
  if (c.mutations_per_cycle < 0) throw ConfigError("mutations per cycle must be >= 0");
  if (c.epochs_per_cycle < 1) throw ConfigError("epochs per cycle must be >= 1");
  if (c.train_epochs < 1) throw ConfigError("train epochs must be >= 1");
  if (c.n_good < 1) throw ConfigError("n_good must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(c.base_lr > 0.0) || !std::isfinite(c.base_lr)) throw ConfigError("learning rate must be > 0");
  if (c.dropout < 0.0 || c.dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
  if (c.probe_size < 2) throw ConfigError("probe size must be >= 2");
  if (c.lrc_samples < 1) throw ConfigError("LRC samples must be >= 1");
  if (c.vram_budget == 0) throw ConfigError("memory budget must be > 0");
}

ModelConfig model_config_for(const SearchConfig& config, const Dataset& data) {
  ModelConfig m;
  m.reductions = config.reductions;
  m.init_channels = config.init_channels;
  m.input_channels = data.channels();
  m.image_size = data.image_size();
  m.classes = data.classes;
  m.dropout = config.dropout;
  return m;
}

std::mt19937_64 derive_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  // FNV-1a of the tag keeps streams distinct without a registry.
  std::uint64_t h = 1469598103934665603ull;
  for (char ch : tag) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

TrainOutcome train_prune_cycle(SupernetModel& model, const Dataset& data, const TrainPhase& phase,
                               std::mt19937_64& rng) {
  if (phase.epochs < 1) throw ConfigError("training phase needs at least one epoch");
  if (data.train.size() == 0) throw InputError("empty training split");
  const std::size_t per_epoch = (data.train.size() + phase.batch_size - 1) / phase.batch_size;
  if (phase.live_pruners) set_usage_window(model, per_epoch);

  std::vector<Param*> params =
      collect_parameters(model, phase.live_pruners ? ParamSet::kAll : ParamSet::kFunction);
  std::vector<Param*> frozen;
  if (!phase.live_pruners) frozen = collect_parameters(model, ParamSet::kPruners);

  TrainOutcome out;
  const auto epochs = static_cast<std::size_t>(phase.epochs);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& idx : epoch_batches(data.train.size(), phase.batch_size, rng)) {
      const Batch batch = gather_train(data, idx, rng);
      Tape tape(Mode::kTrain);
      tape.dropout_rng = &rng;
      const Var logits = model_forward(model, tape, tape.constant(batch.images));
      const double loss = backprop_loss(tape, logits, batch.labels);
      // Values are charged as 4-byte floats, so a loss past float range counts
      // as divergence even though doubles would still hold it.
      if (!std::isfinite(loss) || std::abs(loss) > std::numeric_limits<float>::max()) {
        throw RunError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      out.last_loss = loss;
      sgd_cosine_step(params, epoch, epochs, phase.base_lr);
      for (Param* p : frozen) p->zero_grad();
      if (phase.live_pruners) record_usage(model);
    }
    if (phase.live_pruners) {
      const DeadheadResult res = deadhead_pass(model, phase.cycle, static_cast<int>(epoch));
      out.deleted += res.deleted;
      append_deadheads(res, out.records);
      if (res.deleted > 0) {
        // Deleted ops took their parameters with them.
        params = collect_parameters(model, ParamSet::kAll);
      }
    }
    if (phase.after_epoch) {
      phase.after_epoch(static_cast<int>(epoch));
      params = collect_parameters(model, phase.live_pruners ? ParamSet::kAll : ParamSet::kFunction);
      if (!phase.live_pruners) frozen = collect_parameters(model, ParamSet::kPruners);
    }
  }
  return out;
}

double evaluate_accuracy(SupernetModel& model, const Dataset& data, std::size_t batch_size) {
  const std::size_t n = data.test.size();
  if (n == 0) throw InputError("empty test split");
  std::size_t correct = 0;
  for (std::size_t b = 0; b < n; b += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(n, b + batch_size); ++i) idx.push_back(i);
    const Batch batch = gather_test(data, idx);
    const Tensor logits = model_logits(model, batch.images, Mode::kEval);
    const int k = logits.shape.c;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double* row = logits.data.data() + i * static_cast<std::size_t>(k);
      const int pred = static_cast<int>(std::max_element(row, row + k) - row);
      correct += pred == batch.labels[i] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

RunResult run_spidernet(const SearchConfig& config, const Dataset& data, const RunHooks& hooks) {
  validate(config);
  const auto t0 = Clock::now();
  RunResult r{initial_model(config, data), start_log(config, data, "spidernet")};
  SupernetModel& model = r.model;
  RunLog& log = r.log;
  track_peak(log, model, config.batch_size);

  for (int cycle = 0; cycle < config.cycles; ++cycle) {
    std::mt19937_64 reinit = derive_stream(config.seed, "reinit", cycle);
    reinit_weights(model, reinit);

    std::size_t deleted = 0;
    try {
      std::mt19937_64 train = derive_stream(config.seed, "train", cycle);
      TrainPhase phase{config.epochs_per_cycle, config.base_lr, config.batch_size, true, cycle, {}};
      TrainOutcome t = train_prune_cycle(model, data, phase, train);
      deleted = t.deleted;
      log.deletions.insert(log.deletions.end(), t.records.begin(), t.records.end());
    } catch (const Error& e) {
      log.notes.push_back("cycle " + std::to_string(cycle) + ": training: " + e.what());
    }
    log.cycle_deadheads.push_back(deleted);

    std::size_t attempts = 0;
    for (int attempt = 0; attempt < config.mutations_per_cycle; ++attempt) {
      ++attempts;
      SelectionOptions opts;
      opts.n_good = config.n_good;
      opts.probe_size = config.probe_size;
      opts.lrc_samples = config.lrc_samples;
      opts.budget_bytes = config.vram_budget;
      opts.batch_size = config.batch_size;
      opts.observer = hooks.observer;
      const std::uint64_t index = static_cast<std::uint64_t>(cycle) * 1000 + attempt;
      std::mt19937_64 select = derive_stream(config.seed, "select", index);
      const SelectionResult sel = select_mutation_ntklrc(model, opts, select);

      SelectionRecord rec{cycle,          attempt,        sel.rows,         sel.winner,
                          sel.model_bytes, sel.edge_bytes, sel.budget_bytes, sel.gate_passed};
      log.selections.push_back(rec);
      for (const CandidateRow& row : sel.rows) {
        if (!row.error.empty()) {
          log.notes.push_back("cycle " + std::to_string(cycle) + ": candidate edge " +
                              std::to_string(row.edge.value) + " skipped: " + row.error);
        }
      }

      MutationRecord m;
      m.cycle = cycle;
      m.attempt = attempt;
      if (sel.winner) m.edge = sel.rows[*sel.winner].edge;
      if (!sel.edge) {
        m.memory_bytes_after = estimate_memory(model, config.batch_size).total();
        log.mutations.push_back(m);
        break;
      }
      std::mt19937_64 grow = derive_stream(config.seed, "mutate", index);
      const MutationResult mr = triangular_mutate(model, *sel.edge, grow);
      m.applied = true;
      m.cell = mr.cell;
      m.new_node = mr.new_node;
      m.into_new = mr.into_new;
      m.out_of_new = mr.out_of_new;
      m.memory_bytes_after = estimate_memory(model, config.batch_size).total();
      log.mutations.push_back(m);
      check_budget(model, config);
      track_peak(log, model, config.batch_size);
    }
    log.attempts_per_cycle.push_back(attempts);
    if (hooks.cycle_end) hooks.cycle_end(cycle, model);
  }
  const auto t1 = Clock::now();

  std::mt19937_64 reinit = derive_stream(config.seed, "reinit", config.cycles);
  reinit_weights(model, reinit);
  std::mt19937_64 train = derive_stream(config.seed, "final");
  TrainPhase phase{config.train_epochs, config.base_lr, config.batch_size, true, kFinalPhase, {}};
  const TrainOutcome t = train_prune_cycle(model, data, phase, train);
  log.final_deadheads = t.deleted;
  log.deletions.insert(log.deletions.end(), t.records.begin(), t.records.end());
  finish(log, model, config, data);

  const auto t2 = Clock::now();
  log.timing = Timing{seconds_since(t0, t1), seconds_since(t1, t2), seconds_since(t0, t2)};
  return r;
}

VariantTraits traits(RandomVariant v) {
  switch (v) {
    case RandomVariant::kR1: return {true, true, false};
    case RandomVariant::kR2: return {false, false, false};
    case RandomVariant::kR3: return {false, false, true};
    case RandomVariant::kR4: return {true, false, true};
  }
  throw ConfigError("unknown random variant");
}

std::string_view variant_name(RandomVariant v) {
  switch (v) {
    case RandomVariant::kR1: return "random-1";
    case RandomVariant::kR2: return "random-2";
    case RandomVariant::kR3: return "random-3";
    case RandomVariant::kR4: return "random-4";
  }
  return "random";
}

std::size_t random_delete(SupernetModel& model, std::size_t count, int cycle, int epoch,
                          std::mt19937_64& rng, std::vector<DeletionRecord>& records) {
  std::size_t deleted = 0;
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<std::pair<EdgeId, std::size_t>> alive;
    for (const Cell& c : model.cells) {
      for (const Edge& e : c.edges) {
        for (std::size_t i = 0; i < e.ops.size(); ++i) alive.emplace_back(e.id, i);
      }
    }
    if (alive.empty()) break;
    const auto [edge, index] =
        alive[std::uniform_int_distribution<std::size_t>(0, alive.size() - 1)(rng)];
    DeadheadRecord op{cycle, epoch, edge, model.find_edge(edge)->ops[index].kind, 0.0, false};
    const RemovalOutcome out = remove_op(model, edge, index);
    records.push_back(DeletionRecord{op, DeletionCause::kRandom, !out.removed});
    for (const DeadheadRecord& c : out.collateral) {
      DeadheadRecord cr = c;
      cr.cycle = cycle;
      cr.epoch = epoch;
      records.push_back(DeletionRecord{cr, DeletionCause::kCollateral, false});
    }
    if (out.removed) ++deleted;
  }
  if (deleted > 0) validate(model);
  return deleted;
}

RunResult run_random_variant(RandomVariant variant, const RunLog& reference,
                             const SearchConfig& config, const Dataset& data,
                             const RunHooks& hooks) {
  validate(config);
  if (reference.attempts_per_cycle.size() != static_cast<std::size_t>(config.cycles) ||
      reference.cycle_deadheads.size() != static_cast<std::size_t>(config.cycles)) {
    throw FormatError("reference runlog does not cover " + std::to_string(config.cycles) +
                      " cycles");
  }
  const VariantTraits tr = traits(variant);
  const auto t0 = Clock::now();
  RunResult r{initial_model(config, data), start_log(config, data, std::string(variant_name(variant)))};
  SupernetModel& model = r.model;
  RunLog& log = r.log;
  track_peak(log, model, config.batch_size);

  for (int cycle = 0; cycle < config.cycles; ++cycle) {
    std::size_t deleted = 0;
    if (tr.random_cycle_deletion) {
      std::mt19937_64 del = derive_stream(config.seed, "random-delete", cycle);
      deleted = random_delete(model, reference.cycle_deadheads[cycle], cycle, 0, del,
                              log.deletions);
    }
    log.cycle_deadheads.push_back(deleted);

    const std::size_t attempts = reference.attempts_per_cycle[cycle];
    for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
      const std::uint64_t index = static_cast<std::uint64_t>(cycle) * 1000 + attempt;
      std::mt19937_64 pick = derive_stream(config.seed, "random-select", index);
      const std::vector<EdgeId> edges = model.edge_ids();
      const EdgeId edge = edges[std::uniform_int_distribution<std::size_t>(0, edges.size() - 1)(pick)];

      MutationRecord m;
      m.cycle = cycle;
      m.attempt = static_cast<int>(attempt);
      m.edge = edge;
      SelectionRecord rec;
      rec.cycle = cycle;
      rec.attempt = m.attempt;
      rec.budget_bytes = config.vram_budget;
      rec.model_bytes = estimate_memory(model, config.batch_size).total();
      rec.edge_bytes = full_edge_estimate(model, *model.cell_of(edge), config.batch_size).total();
      rec.gate_passed = rec.model_bytes + 2 * rec.edge_bytes < config.vram_budget;
      log.selections.push_back(rec);
      if (rec.gate_passed) {
        std::mt19937_64 grow = derive_stream(config.seed, "mutate", index);
        const MutationResult mr = triangular_mutate(model, edge, grow);
        m.applied = true;
        m.cell = mr.cell;
        m.new_node = mr.new_node;
        m.into_new = mr.into_new;
        m.out_of_new = mr.out_of_new;
        check_budget(model, config);
        track_peak(log, model, config.batch_size);
      }
      m.memory_bytes_after = estimate_memory(model, config.batch_size).total();
      log.mutations.push_back(m);
    }
    log.attempts_per_cycle.push_back(attempts);
    if (hooks.cycle_end) hooks.cycle_end(cycle, model);
  }
  const auto t1 = Clock::now();

  std::mt19937_64 reinit = derive_stream(config.seed, "reinit", config.cycles);
  reinit_weights(model, reinit);
  std::mt19937_64 train = derive_stream(config.seed, "final");
  TrainPhase phase{config.train_epochs, config.base_lr, config.batch_size, tr.final_pruners,
                   kFinalPhase, {}};

  std::vector<std::size_t> per_epoch(static_cast<std::size_t>(config.train_epochs), 0);
  std::mt19937_64 del = derive_stream(config.seed, "random-delete", config.cycles);
  std::size_t random_final = 0;
  if (tr.random_final_deletion) {
    std::uniform_int_distribution<int> when(0, config.train_epochs - 1);
    for (std::size_t k = 0; k < reference.final_deadheads; ++k) ++per_epoch[when(del)];
    phase.after_epoch = [&](int epoch) {
      random_final += random_delete(model, per_epoch[epoch], kFinalPhase, epoch, del,
                                    log.deletions);
    };
  }
  const TrainOutcome t = train_prune_cycle(model, data, phase, train);
  log.final_deadheads = t.deleted + random_final;
  log.deletions.insert(log.deletions.end(), t.records.begin(), t.records.end());
  finish(log, model, config, data);

  const auto t2 = Clock::now();
  log.timing = Timing{seconds_since(t0, t1), seconds_since(t1, t2), seconds_since(t0, t2)};
  return r;
}

json finalize_report(const RunLog& log, const SupernetModel& model) {
  const std::size_t batch = log.config.value("batch_size", std::size_t{64});
  const MemoryEstimate mem = estimate_memory(model, batch);
  return json{{"format", kReportFormat},
              {"variant", log.variant},
              {"seed", log.seed},
              {"test_accuracy", log.final.test_accuracy},
              {"search_time_s", log.timing.search_seconds},
              {"final_training_time_s", log.timing.final_seconds},
              {"total_time_s", log.timing.total_seconds},
              {"parameter_count", parameter_count(model)},
              {"buffer_count", buffer_count(model)},
              {"pruner_count", pruner_count(model)},
              {"parameter_bytes", mem.parameter_bytes},
              {"peak_memory_estimate_bytes", log.final.peak_memory_bytes},
              {"final_memory_estimate_bytes", mem.total()},
              {"mutations_applied", log.applied_mutations()},
              {"mutations_attempted", log.attempted_mutations()},
              {"genotype", "genotype_final.json"}};
}

}  // namespace spidernet
