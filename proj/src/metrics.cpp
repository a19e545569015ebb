#include "spidernet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "spidernet/errors.hpp"

namespace spidernet {

namespace {

constexpr std::size_t kRegionChunk = 64;

void rebuild_block(PrimitiveBlock& block, int in, int out, std::mt19937_64& rng) {
  block = make_block(block.kind, in, out, rng);
}

void collect_patterns(const std::function<void(Tape&)>& forward,
                      std::set<std::vector<bool>>& patterns) {
  Tape tape(Mode::kEval);
  tape.capture_relu_outputs(true);
  forward(tape);
  const auto& outs = tape.relu_outputs();
  if (outs.empty()) {
    patterns.insert(std::vector<bool>{});
    return;
  }
  const int n = tape.value(outs.front()).shape.n;
  std::size_t per_sample = 0;
  for (Var v : outs) {
    const Tensor& t = tape.value(v);
    if (t.shape.n != n) throw InputError("activation batch sizes differ within one forward");
    per_sample += t.size() / static_cast<std::size_t>(n);
  }
  for (int i = 0; i < n; ++i) {
    std::vector<bool> bits;
    bits.reserve(per_sample);
    for (Var v : outs) {
      const Tensor& t = tape.value(v);
      const std::size_t stride = t.size() / static_cast<std::size_t>(n);
      const double* p = t.data.data() + static_cast<std::size_t>(i) * stride;
      for (std::size_t k = 0; k < stride; ++k) bits.push_back(p[k] > 0.0);
    }
    patterns.insert(std::move(bits));
  }
}

Tensor slice_batch(const Tensor& batch, int begin, int end) {
  Shape s = batch.shape;
  s.n = end - begin;
  Tensor out(s);
  const std::size_t per = batch.size() / static_cast<std::size_t>(batch.shape.n);
  std::copy(batch.data.begin() + static_cast<std::ptrdiff_t>(begin * per),
            batch.data.begin() + static_cast<std::ptrdiff_t>(end * per), out.data.begin());
  return out;
}

}  // namespace

SupernetModel make_slim_copy(const SupernetModel& model, std::mt19937_64& rng) {
  SupernetModel s = model;
  s.config.init_channels = 1;
  rebuild_block(s.stem, s.config.input_channels, 1, rng);
  rebuild_block(s.stem_bn, 1, 1, rng);
  for (Cell& cell : s.cells) {
    cell.channels = 1;
    for (InputAligner& a : cell.aligners) {
      const SourceShape src = source_shape(s, *cell.find_node(a.node));
      a = make_aligner(a.node, src.channels, src.scale, cell, rng);
    }
    for (Edge& e : cell.edges) {
      for (CandidateOp& op : e.ops) {
        rebuild_block(op.block, 1, 1, rng);
        op.pruner.off_history.clear();
      }
    }
  }
  rebuild_block(s.classifier, 1, s.config.classes, rng);
  return s;
}

Tensor draw_probe(const ModelConfig& config, std::size_t n, std::mt19937_64& rng) {
  Tensor t(Shape{static_cast<int>(n), config.input_channels, config.image_size, config.image_size});
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : t.data) v = dist(rng);
  return t;
}

Tensor draw_uniform_inputs(const ModelConfig& config, std::size_t n, std::mt19937_64& rng) {
  Tensor t(Shape{static_cast<int>(n), config.input_channels, config.image_size, config.image_size});
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& v : t.data) v = dist(rng);
  return t;
}

Eigen::MatrixXd output_jacobian(const std::function<Var(Tape&)>& forward,
                                std::span<Param* const> params,
                                std::span<const std::string> names) {
  Tape tape(Mode::kTrain);
  tape.update_running_stats = false;
  const Var out = forward(tape);
  const Tensor y = tape.value(out);

  std::vector<std::size_t> offsets;
  std::size_t cols = 0;
  for (Param* p : params) {
    offsets.push_back(cols);
    cols += p->size();
  }
  Eigen::MatrixXd jac(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < y.size(); ++r) {
    for (Param* p : params) p->zero_grad();
    Tensor seed(y.shape, 0.0);
    seed.data[r] = 1.0;
    tape.backward(out, seed);
    for (std::size_t k = 0; k < params.size(); ++k) {
      const Tensor& g = params[k]->grad;
      for (std::size_t j = 0; j < g.size(); ++j) {
        const double v = g.data[j];
        if (!std::isfinite(v)) {
          const std::string who = k < names.size() ? names[k] : params[k]->name;
          throw NumericError("non-finite Jacobian entry in " + who);
        }
        jac(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offsets[k] + j)) = v;
      }
    }
  }
  for (Param* p : params) p->zero_grad();
  return jac;
}

double ntk_condition_number(const Eigen::MatrixXd& jacobian) {
  const Eigen::MatrixXd theta = jacobian * jacobian.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(theta, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("NTK eigensolve did not converge");
  const Eigen::VectorXd& lambda = solver.eigenvalues();
  if (!lambda.allFinite()) throw NumericError("non-finite NTK eigenvalue");
  const double lmax = lambda.maxCoeff();
  const double lmin = lambda.minCoeff();
  if (lmax <= 0.0 || lmin <= 1e-12 * lmax) return std::numeric_limits<double>::infinity();
  return lmax / lmin;
}

double ntk_condition_number(SupernetModel& model, const Tensor& probe) {
  if (probe.shape.n < 2) throw InputError("NTK probe needs at least 2 inputs");
  std::vector<Param*> params;
  std::vector<std::string> names;
  for_each_block(model, [&](const std::string& path, PrimitiveBlock& b) {
    for (Param& p : b.params) {
      params.push_back(&p);
      names.push_back(path + "/" + p.name);
    }
  });
  // One row per sample: the gradient of that sample's summed logits.
  const auto forward = [&](Tape& tape) {
    const Var logits = model_forward(model, tape, tape.constant(probe));
    const int classes = tape.value(logits).shape.c;
    const Var ones = tape.constant(Tensor(Shape{1, classes, 1, 1}, 1.0));
    const Var zero = tape.constant(Tensor(Shape{1, 1, 1, 1}, 0.0));
    return ops::linear(tape, logits, ones, zero);
  };
  const Eigen::MatrixXd jac = output_jacobian(forward, params, names);
  return ntk_condition_number(jac);
}

std::size_t count_activation_patterns(const std::function<void(Tape&)>& forward) {
  std::set<std::vector<bool>> patterns;
  collect_patterns(forward, patterns);
  return patterns.size();
}

std::size_t count_linear_regions(SupernetModel& model, const Tensor& samples) {
  if (samples.shape.n < 1) throw InputError("linear region count needs at least one sample");
  std::set<std::vector<bool>> patterns;
  for (int b = 0; b < samples.shape.n; b += static_cast<int>(kRegionChunk)) {
    const int e = std::min(samples.shape.n, b + static_cast<int>(kRegionChunk));
    const Tensor chunk = slice_batch(samples, b, e);
    collect_patterns([&](Tape& tape) { model_forward(model, tape, tape.constant(chunk)); },
                     patterns);
  }
  return patterns.size();
}

std::size_t count_linear_regions(SupernetModel& model, std::size_t samples, std::mt19937_64& rng) {
  return count_linear_regions(model, draw_uniform_inputs(model.config, samples, rng));
}

std::vector<std::size_t> joint_rank_scores(std::span<const MetricPair> c) {
  std::vector<std::size_t> scores(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::size_t kappa_pos = 1;
    std::size_t lrc_pos = 1;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (c[j].ntk_condition > c[i].ntk_condition) ++kappa_pos;
      if (c[j].lrc < c[i].lrc) ++lrc_pos;
    }
    scores[i] = kappa_pos + lrc_pos;
  }
  return scores;
}

std::size_t joint_rank(std::span<const MetricPair> candidates) {
  if (candidates.empty()) throw InputError("joint_rank on an empty candidate list");
  const std::vector<std::size_t> scores = joint_rank_scores(candidates);
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] &&
         candidates[i].ntk_condition < candidates[best].ntk_condition)) {
      best = i;
    }
  }
  return best;
}

bool admits(const MetricPair& on, const MetricPair& off) {
  return on.ntk_condition <= off.ntk_condition && on.lrc >= off.lrc;
}

SelectionResult select_mutation_ntklrc(SupernetModel& model, const SelectionOptions& options,
                                       std::mt19937_64& rng) {
  if (options.n_good < 1) throw InputError("n_good must be >= 1");
  SelectionResult result;
  result.budget_bytes = options.budget_bytes;

  const SupernetModel slim = make_slim_copy(model, rng);
  const Tensor probe = draw_probe(model.config, options.probe_size, rng);
  const Tensor samples = draw_uniform_inputs(model.config, options.lrc_samples, rng);

  std::vector<EdgeId> order = model.edge_ids();
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> admitted;
  for (EdgeId edge : order) {
    SupernetModel trial = slim;
    const MutationResult mr = triangular_mutate(trial, edge, rng);
    SupernetModel on = trial;
    SupernetModel off = trial;
    off.find_edge(mr.into_new)->disconnected = true;
    off.find_edge(mr.out_of_new)->disconnected = true;
    if (options.observer) {
      SupernetModel tmpl = slim;
      options.observer(tmpl, on, off, probe);
    }

    CandidateRow row;
    row.edge = edge;
    try {
      row.on = MetricPair{ntk_condition_number(on, probe), count_linear_regions(on, samples)};
      row.off = MetricPair{ntk_condition_number(off, probe), count_linear_regions(off, samples)};
      row.admitted = admits(row.on, row.off);
    } catch (const NumericError& err) {
      row.error = err.what();
    }
    if (row.admitted) admitted.push_back(result.rows.size());
    result.rows.push_back(row);
    if (admitted.size() >= options.n_good) break;
  }
  if (admitted.empty()) return result;

  std::vector<MetricPair> pairs;
  for (std::size_t i : admitted) pairs.push_back(result.rows[i].on);
  const std::size_t w = admitted[joint_rank(pairs)];
  result.winner = w;

  const EdgeId best = result.rows[w].edge;
  const Cell& cell = *model.cell_of(best);
  result.model_bytes = estimate_memory(model, options.batch_size).total();
  result.edge_bytes = full_edge_estimate(model, cell, options.batch_size).total();
  result.gate_passed = result.model_bytes + 2 * result.edge_bytes < options.budget_bytes;
  if (result.gate_passed) result.edge = best;
  return result;
}

}  // namespace spidernet
