// Acceptance suite. One PASS/FAIL line per criterion, exit status 1 if any
// failed. Usage: spidernet_acceptance <cli> [workdir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "gradcheck_util.hpp"
#include "linear_oracle.hpp"
#include "lrc_oracle.hpp"
#include "spidernet/checkpoint.hpp"
#include "spidernet/errors.hpp"
#include "spidernet/genotype.hpp"
#include "spidernet/metrics.hpp"
#include "spidernet/mutation.hpp"
#include "spidernet/optim.hpp"
#include "spidernet/pruner.hpp"
#include "spidernet/pruning.hpp"
#include "spidernet/runlog.hpp"
#include "spidernet/search.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace spidernet;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

int run_command(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WEXITSTATUS(rc);
}

struct Paths {
  std::string cli;
  fs::path work;
};

// Logits from probe-batch statistics, no dropout, running stats untouched.
Tensor probe_logits(SupernetModel& m, const Tensor& probe) {
  Tape tape(Mode::kTrain);
  tape.update_running_stats = false;
  const Var y = model_forward(m, tape, tape.constant(probe));
  return tape.value(y);
}

// ---------------------------------------------------------------------------

Outcome pruner_gradient_law() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> wd(-1.0, 1.0);
  std::normal_distribution<double> xd(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 16);
  double worst_rel = 0.0;
  double worst_leak = 0.0;
  int trials = 0;
  while (trials < 1000) {
    PrunerState st;
    const double w = wd(rng);
    const double mw = st.m * w;
    if (mw == std::floor(mw)) continue;
    st.set_w(w);
    Param x("x", Shape{1, len(rng), 1, 1});
    for (double& v : x.value.data) v = xd(rng);
    double sum_x = 0.0;
    for (double v : x.value.data) sum_x += v;

    Tape tape(Mode::kTrain);
    const Var y = pruner_apply(tape, tape.param(x), st);
    tape.backward(y, Tensor(x.value.shape, 1.0));
    const double analytic = st.weight.grad.data[0];
    worst_rel = std::max(worst_rel, std::abs(analytic - sum_x) / std::max(std::abs(sum_x), 1e-12));
    if (w < 0.0) {
      const double xmax = x.value.max_abs();
      const double ymax = tape.value(y).max_abs();
      worst_leak = std::max(worst_leak, xmax > 0.0 ? ymax / xmax : 0.0);
    }
    ++trials;
  }
  const double t = seconds_since(t0);
  o.require(worst_rel <= 1e-5, "relative gradient error " + std::to_string(worst_rel));
  o.require(worst_leak <= 1e-9, "off-gate leak ratio " + std::to_string(worst_leak));
  o.require(t < 5.0, "runtime " + std::to_string(t) + " s");
  o.detail << (o.pass ? "" : "; ") << "max rel err " << worst_rel << ", max leak ratio "
           << worst_leak << ", " << t << " s";
  return o;
}

void fill_window(CandidateOp& op, std::size_t window, std::size_t off) {
  op.pruner.off_history.set_capacity(window);
  op.pruner.off_history.clear();
  for (std::size_t i = 0; i < window; ++i) op.pruner.off_history.push(i < off);
}

Outcome deadhead_threshold() {
  Outcome o;
  std::mt19937_64 rng(202);
  // Threshold at a full window of 4 epochs x 25 batches.
  {
    SupernetModel m = init_minimum_viable_model(spidernet::testing::small_config(2), rng);
    set_usage_window(m, 25);
    Edge& e = m.cells[2].edges[0];
    const EdgeId id = e.id;
    fill_window(e.ops[3], 100, 76);
    fill_window(e.ops[4], 100, 75);
    const DeadheadResult r = deadhead_pass(m, 0, 3);
    const Edge* after = m.find_edge(id);
    bool kept75 = false;
    bool gone76 = true;
    for (const CandidateOp& op : after->ops) {
      if (op.kind == PrimitiveKind::kSepConv5x5) kept75 = true;
      if (op.kind == PrimitiveKind::kSepConv3x3) gone76 = false;
    }
    o.require(r.deleted == 1 && gone76, "76% op not deleted");
    o.require(kept75, "75% op deleted");
  }
  // Logit shift per pass on a desk-scale model: ops whose gate has been off
  // for the window are deleted; eval logits must not move.
  {
    ModelConfig cfg = spidernet::testing::small_config(8);
    SupernetModel m = init_minimum_viable_model(cfg, rng);
    const Tensor x = spidernet::testing::random_tensor(Shape{16, 3, 8, 8}, rng);
    const std::size_t batches = 5;
    set_usage_window(m, batches);
    double worst = 0.0;
    std::size_t total_deleted = 0;
    for (int pass = 0; pass < 4; ++pass) {
      // Switch off a random subset of live ops.
      for (Cell& c : m.cells) {
        for (Edge& e : c.edges) {
          for (CandidateOp& op : e.ops) {
            if (std::bernoulli_distribution(0.15)(rng)) {
              op.pruner.set_w(std::uniform_real_distribution<double>(-0.1, -0.01)(rng));
            }
          }
        }
      }
      for (std::size_t b = 0; b < 4 * batches; ++b) record_usage(m);
      const Tensor before = model_logits(m, x, Mode::kEval);
      const DeadheadResult r = deadhead_pass(m, 0, pass);
      total_deleted += r.deleted;
      validate(m);
      const Tensor after = model_logits(m, x, Mode::kEval);
      for (std::size_t i = 0; i < before.size(); ++i) {
        worst = std::max(worst, std::abs(before.data[i] - after.data[i]));
      }
    }
    o.require(total_deleted > 0, "no op was deleted");
    o.require(worst <= 1e-4, "logit shift " + std::to_string(worst));
    o.detail << (o.pass ? "" : "; ") << "76% deleted, 75% kept; " << total_deleted
             << " deletions, max logit shift " << worst;
  }
  return o;
}

Outcome mutation_algebra() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  ModelConfig cfg = spidernet::testing::small_config(1);
  const SupernetModel base = init_minimum_viable_model(cfg, rng);
  std::uniform_int_distribution<int> length(0, 60);
  std::size_t failures = 0;
  std::size_t steps = 0;
  for (int seq = 0; seq < 10000 && failures < 5; ++seq) {
    SupernetModel m = base;
    const int k = length(rng);
    for (int i = 0; i < k; ++i) {
      const auto ids = m.edge_ids();
      const EdgeId pick = ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)];
      Cell& cell = *m.cell_of(pick);
      const auto before = spidernet::testing::reachable_pairs(cell);
      const MutationResult r = triangular_mutate(m, pick, rng);
      const Cell& after_cell = *m.cell_of(pick);
      bool ok = r.mutated == pick && cell_is_acyclic(after_cell) && output_reachable(after_cell);
      const auto after = spidernet::testing::reachable_pairs(after_cell);
      for (const auto& p : before) ok = ok && after.count(p) > 0;
      if (!ok) {
        ++failures;
        break;
      }
      ++steps;
    }
    if (m.node_count() != 12 + static_cast<std::size_t>(k) ||
        m.edge_count() != 9 + 2 * static_cast<std::size_t>(k)) {
      ++failures;
    }
    if (seq % 500 == 0) {
      try {
        validate(m);
      } catch (const Error&) {
        ++failures;
      }
    }
  }
  const double t = seconds_since(t0);
  o.require(failures == 0, std::to_string(failures) + " failing sequences");
  o.require(t < 60.0, "runtime " + std::to_string(t) + " s");
  o.detail << (o.pass ? "" : "; ") << "10000 sequences, " << steps << " mutations, " << t << " s";
  return o;
}

Outcome selection_fidelity(const fs::path& run_dir) {
  Outcome o;
  // Live trial checks on a desk-scale model.
  std::mt19937_64 rng(404);
  SupernetModel m = init_minimum_viable_model(spidernet::testing::small_config(8), rng);
  std::size_t trials = 0;
  std::size_t unequal = 0;
  double worst = 0.0;
  SelectionOptions opts;
  opts.budget_bytes = std::size_t{512} << 20;
  opts.lrc_samples = 200;
  opts.observer = [&](SupernetModel& tmpl, SupernetModel& on, SupernetModel& off,
                      const Tensor& probe) {
    ++trials;
    std::vector<Param*> pa = collect_parameters(on, ParamSet::kAll);
    std::vector<Param*> pb = collect_parameters(off, ParamSet::kAll);
    bool same = pa.size() == pb.size();
    for (std::size_t i = 0; same && i < pa.size(); ++i) same = pa[i]->value.data == pb[i]->value.data;
    unequal += same ? 0 : 1;
    const Tensor a = probe_logits(tmpl, probe);
    const Tensor b = probe_logits(off, probe);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  };
  std::size_t applied = 0;
  for (int round = 0; round < 3; ++round) {
    const SelectionResult r = select_mutation_ntklrc(m, opts, rng);
    if (r.edge) {
      const CandidateRow& w = r.rows[*r.winner];
      o.require(admits(w.on, w.off), "live winner not admitted");
      o.require(r.model_bytes + 2 * r.edge_bytes < r.budget_bytes, "live gate violated");
      triangular_mutate(m, *r.edge, rng);
      ++applied;
    }
  }
  o.require(trials > 0, "observer never called");
  o.require(unequal == 0, std::to_string(unequal) + " trial pairs differ");
  o.require(worst <= 1e-5, "S_off logit deviation " + std::to_string(worst));

  // RunLog replay of a CLI search.
  std::size_t replayed = 0;
  try {
    const RunLog log = parse_runlog(read_text(run_dir / "runlog.json"));
    for (const MutationRecord& mr : log.mutations) {
      if (!mr.applied) continue;
      const SelectionRecord* sel = nullptr;
      for (const SelectionRecord& s : log.selections) {
        if (s.cycle == mr.cycle && s.attempt == mr.attempt) sel = &s;
      }
      if (sel == nullptr || !sel->winner || *sel->winner >= sel->candidates.size()) {
        o.require(false, "applied mutation without a winning selection");
        continue;
      }
      const CandidateRow& w = sel->candidates[*sel->winner];
      o.require(mr.edge && *mr.edge == w.edge, "mutated edge is not the winner");
      o.require(w.admitted && admits(w.on, w.off), "logged winner fails admission");
      o.require(sel->gate_passed && sel->model_bytes + 2 * sel->edge_bytes < sel->budget_bytes,
                "logged gate violated");
      // The winner must also be the joint-rank argmax among admitted rows.
      std::vector<MetricPair> admitted;
      std::vector<std::size_t> index;
      for (std::size_t i = 0; i < sel->candidates.size(); ++i) {
        if (sel->candidates[i].admitted) {
          admitted.push_back(sel->candidates[i].on);
          index.push_back(i);
        }
      }
      o.require(!admitted.empty() && index[joint_rank(admitted)] == *sel->winner,
                "winner is not the joint-rank choice");
      ++replayed;
    }
  } catch (const Error& e) {
    o.require(false, std::string("runlog replay: ") + e.what());
  }
  o.detail << (o.pass ? "" : "; ") << trials << " live trials, " << applied
           << " live mutations, max S_off deviation " << worst << ", " << replayed
           << " logged mutations replayed";
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  std::mt19937_64 rng(505);
  std::normal_distribution<double> g(0.0, 1.0);
  // ReLU-free network.
  {
    Param w("w", Shape{4, 2, 1, 1});
    for (double& v : w.value.data) v = g(rng);
    const Tensor b(Shape{1, 4, 1, 1}, 0.2);
    Tensor x(Shape{1000, 2, 1, 1});
    for (double& v : x.data) v = g(rng);
    const auto n = count_activation_patterns(
        [&](Tape& t) { ops::linear(t, t.constant(x), t.param(w), t.constant(b)); });
    o.require(n == 1, "linear network LRC " + std::to_string(n));
  }
  // Three hyperplanes in the plane.
  std::size_t worst_gap = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor w(Shape{3, 2, 1, 1});
    Tensor b(Shape{1, 3, 1, 1});
    for (double& v : w.data) v = g(rng);
    for (double& v : b.data) v = 0.5 * g(rng);
    std::vector<spidernet::testing::Line> lines;
    for (int k = 0; k < 3; ++k) lines.push_back({w.data[2 * k], w.data[2 * k + 1], b.data[k]});
    const std::size_t exact = spidernet::testing::arrangement_regions(lines);
    Tensor x(Shape{10000, 2, 1, 1});
    for (double& v : x.data) v = 2.0 * g(rng);
    const Tensor wo(Shape{1, 3, 1, 1}, 1.0);
    const Tensor bo(Shape{1, 1, 1, 1}, 0.0);
    const std::size_t sampled = count_activation_patterns([&](Tape& t) {
      const Var h = ops::relu(t, ops::linear(t, t.constant(x), t.constant(w), t.constant(b)));
      ops::linear(t, h, t.constant(wo), t.constant(bo));
    });
    o.require(sampled <= exact, "sampled LRC " + std::to_string(sampled) + " exceeds oracle " +
                                    std::to_string(exact));
    worst_gap = std::max(worst_gap, exact - std::min(exact, sampled));
  }
  // Orthonormal probe on a linear model.
  double kappa = 0.0;
  {
    Param w("w", Shape{1, 3, 1, 1});
    w.value.data = {0.4, -1.1, 2.3};
    Tensor probe(Shape{3, 3, 1, 1});
    // Rows of a rotation matrix.
    const double c = std::cos(0.7);
    const double s = std::sin(0.7);
    probe.data = {c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0};
    const Tensor zero(Shape{1, 1, 1, 1}, 0.0);
    Param* ps[] = {&w};
    const Eigen::MatrixXd j = output_jacobian(
        [&](Tape& t) { return ops::linear(t, t.constant(probe), t.param(w), t.constant(zero)); },
        ps);
    kappa = ntk_condition_number(j);
    o.require(std::abs(kappa - 1.0) <= 1e-6, "orthonormal probe kappa " + std::to_string(kappa));
  }
  o.detail << (o.pass ? "" : "; ") << "linear LRC 1, 10 arrangements within oracle (max shortfall "
           << worst_gap << "), kappa " << kappa;
  return o;
}

Outcome joint_rank_checks() {
  Outcome o;
  const std::vector<MetricPair> worked{{10, 5}, {20, 9}, {30, 7}};
  o.require(joint_rank(worked) == 1, "worked example picked " + std::to_string(joint_rank(worked)));
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> kd(1.0, 1e4);
  std::uniform_int_distribution<std::size_t> ld(1, 500);
  std::size_t mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<MetricPair> c(2 + rng() % 10);
    for (auto& p : c) p = MetricPair{kd(rng), ld(rng)};
    const std::size_t best = joint_rank(c);
    const double a = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    const double shift = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    auto kt = c;
    for (auto& p : kt) p.ntk_condition = a * std::log(p.ntk_condition) + shift;
    const std::size_t mult = 1 + rng() % 7;
    auto lt = c;
    for (auto& p : lt) p.lrc = mult * p.lrc * p.lrc + 3;
    if (joint_rank(kt) != best || joint_rank(lt) != best) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " transform trials changed the argmax");
  o.detail << (o.pass ? "" : "; ") << "worked example -> 1, 100 transform trials";
  return o;
}

struct RunOutput {
  bool ok = false;
  double seconds = 0.0;
  json report;
};

RunOutput run_cli(const Paths& p, const std::string& args, const fs::path& out,
                  const std::string& log_name) {
  RunOutput r;
  fs::remove_all(out);
  const std::string cmd = shell_quote(p.cli) + " " + args + " --out " + shell_quote(out.string()) +
                          " > " + shell_quote((p.work / log_name).string()) + " 2>&1";
  const auto t0 = Clock::now();
  const int rc = run_command(cmd);
  r.seconds = seconds_since(t0);
  if (rc != 0) return r;
  try {
    r.report = read_json(out / "report.json");
    r.ok = true;
  } catch (const Error&) {
  }
  return r;
}

std::string search_args(std::uint64_t seed) {
  return "search --reductions 2 --channels 8 --cycles 3 --mutations-per-cycle 2 "
         "--epochs-per-cycle 2 --train-epochs 20 --dataset synthetic --seed " +
         std::to_string(seed);
}

Outcome micro_run(const Paths& p, const RunOutput& run, const fs::path& dir) {
  Outcome o;
  o.require(run.ok, "search failed (see " + (p.work / "search_7.log").string() + ")");
  if (!run.ok) return o;
  const double acc = run.report["test_accuracy"].get<double>();
  const auto peak = run.report["peak_memory_estimate_bytes"].get<std::size_t>();
  o.require(run.seconds < 900.0, "runtime " + std::to_string(run.seconds) + " s");
  o.require(peak <= std::size_t{512} * 1000 * 1000, "peak estimate " + std::to_string(peak));
  o.require(acc >= 0.95, "test accuracy " + std::to_string(acc));
  // Every cycle checkpoint stays under budget too.
  for (int c = 0; c < 3; ++c) {
    try {
      std::mt19937_64 scratch(0);
      SupernetModel m = from_genotype(read_json(dir / ("genotype_cycle" + std::to_string(c) + ".json")), scratch);
      const std::size_t bytes = estimate_memory(m, 64).total();
      o.require(bytes <= std::size_t{512} * 1000 * 1000, "cycle " + std::to_string(c) + " estimate " + std::to_string(bytes));
    } catch (const Error& e) {
      o.require(false, std::string("cycle checkpoint: ") + e.what());
    }
  }
  double oracle = 0.0;
  try {
    const json cfg = read_json(dir / "config.json");
    const Dataset data = load_dataset(dataset_spec_from_json(cfg.at("dataset")),
                                      cfg.at("seed").get<std::uint64_t>());
    oracle = spidernet::testing::logistic_regression_accuracy(data);
    o.require(oracle >= 0.95, "logistic-regression oracle " + std::to_string(oracle));
  } catch (const std::exception& e) {
    o.require(false, std::string("oracle: ") + e.what());
  }
  o.detail << (o.pass ? "" : "; ") << "accuracy " << acc << ", oracle " << oracle << ", peak "
           << peak << " bytes, " << run.seconds << " s";
  return o;
}

Outcome nas_vs_random(const Paths& p, const RunOutput& seed7, const fs::path& dir7) {
  Outcome o;
  std::ostringstream rows;
  double sum_s = 0.0;
  double sum_r = 0.0;
  for (std::uint64_t seed : {7, 8, 9}) {
    const fs::path sdir = p.work / ("search_" + std::to_string(seed));
    RunOutput s = seed7;
    if (seed != 7) s = run_cli(p, search_args(seed), sdir, "search_" + std::to_string(seed) + ".log");
    const fs::path ref = seed == 7 ? dir7 : sdir;
    const RunOutput r = run_cli(p, "random --variant 2 --reference " + shell_quote(ref.string()),
                                p.work / ("random2_" + std::to_string(seed)),
                                "random2_" + std::to_string(seed) + ".log");
    if (!s.ok || !r.ok) {
      o.require(false, "seed " + std::to_string(seed) + ": run failed");
      continue;
    }
    const auto ps = s.report["parameter_count"].get<std::size_t>();
    const auto pr = r.report["parameter_count"].get<std::size_t>();
    o.require(ps <= pr, "seed " + std::to_string(seed) + ": " + std::to_string(ps) + " > " +
                            std::to_string(pr));
    rows << " seed " << seed << ": " << ps << " vs " << pr << ";";
    sum_s += static_cast<double>(ps);
    sum_r += static_cast<double>(pr);
  }
  o.detail << (o.pass ? "" : "; ") << "params spidernet vs random-2:" << rows.str()
           << " means " << sum_s / 3.0 << " vs " << sum_r / 3.0;
  return o;
}

std::string untimed_runlog(const fs::path& dir) {
  return to_json_untimed(parse_runlog(read_text(dir / "runlog.json"))).dump();
}

Outcome determinism(const Paths& p, const fs::path& dir7) {
  Outcome o;
  const fs::path again = p.work / "search_7_again";
  const RunOutput r = run_cli(p, search_args(7), again, "search_7_again.log");
  o.require(r.ok, "rerun failed");
  if (!r.ok) return o;
  try {
    o.require(untimed_runlog(dir7) == untimed_runlog(again), "runlogs differ");
    std::size_t files = 0;
    for (const char* name : {"genotype_cycle0.json", "genotype_cycle1.json", "genotype_cycle2.json",
                             "genotype_final.json", "weights_final.json"}) {
      o.require(read_text(dir7 / name) == read_text(again / name), std::string(name) + " differs");
      ++files;
    }
    o.detail << (o.pass ? "" : "; ") << "runlog (untimed) and " << files
             << " genotype/weight files byte-identical";
  } catch (const Error& e) {
    o.require(false, e.what());
  }
  return o;
}

Outcome numeric_kernel() {
  Outcome o;
  std::mt19937_64 rng(1010);
  double worst = 0.0;
  std::ostringstream per;
  for (PrimitiveKind k : kSearchableKinds) {
    double kind_worst = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      const auto c = spidernet::testing::primitive_gradcheck(k, rng);
      kind_worst = std::max(kind_worst, c.error);
    }
    o.require(kind_worst < 1e-3, std::string(kind_name(k)) + " gradcheck " + std::to_string(kind_worst));
    worst = std::max(worst, kind_worst);
  }
  const double lr0 = cosine_lr(0, 50, 0.01);
  const double lrT = cosine_lr(50, 50, 0.01);
  o.require(lr0 == 0.01, "lr(0) = " + std::to_string(lr0));
  o.require(lrT == 0.0, "lr(T) = " + std::to_string(lrT));
  o.detail << (o.pass ? "" : "; ") << "max gradcheck error " << worst << ", lr(0) " << lr0
           << ", lr(T) " << lrT;
  return o;
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    Outcome o;
    o.require(false, std::string("exception: ") + e.what());
    return o;
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: spidernet_acceptance <spidernet-cli> [workdir]\n";
    return 2;
  }
  Paths p;
  p.cli = argv[1];
  p.work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "spidernet_acceptance";
  fs::create_directories(p.work);

  const char* names[] = {"pruner gradient law",   "deadhead threshold", "mutation algebra",
                         "selection fidelity",    "metric oracles",     "joint rank",
                         "end-to-end micro-run",  "search vs random",   "determinism",
                         "numeric kernel"};
  int failures = 0;
  const auto report = [&](int n, const Outcome& o) {
    std::cout << "criterion " << n << " (" << names[n - 1] << "): " << (o.pass ? "PASS" : "FAIL")
              << "  " << o.detail.str() << std::endl;
    failures += o.pass ? 0 : 1;
  };

  // The seed-7 search is shared by criteria 4, 7, 8 and 9.
  const fs::path dir7 = p.work / "search_7";
  const RunOutput run7 = run_cli(p, search_args(7), dir7, "search_7.log");

  report(1, guarded(pruner_gradient_law));
  report(2, guarded(deadhead_threshold));
  report(3, guarded(mutation_algebra));
  report(4, guarded([&] { return selection_fidelity(dir7); }));
  report(5, guarded(metric_oracles));
  report(6, guarded(joint_rank_checks));
  report(7, guarded([&] { return micro_run(p, run7, dir7); }));
  report(8, guarded([&] { return nas_vs_random(p, run7, dir7); }));
  report(9, guarded([&] { return determinism(p, dir7); }));
  report(10, guarded(numeric_kernel));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
