#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spidernet/ids.hpp"
#include "spidernet/mutation.hpp"
#include "spidernet/supernet.hpp"

namespace spidernet {

// kappa = +inf marks a singular kernel.
struct MetricPair {
  double ntk_condition = 1.0;
  std::size_t lrc = 1;
};

// Same ids, same op kinds and pruner weights as `model`, but every cell and
// the stem run at one channel. Parameters are drawn fresh from `rng`.
SupernetModel make_slim_copy(const SupernetModel& model, std::mt19937_64& rng);

// n standard-normal images at the model's input shape.
Tensor draw_probe(const ModelConfig& config, std::size_t n, std::mt19937_64& rng);
// n images uniform in [0,1].
Tensor draw_uniform_inputs(const ModelConfig& config, std::size_t n, std::mt19937_64& rng);

// Rows are (sample, output) pairs in sample-major order; columns follow
// `params` in order. `forward` must record a (n, K, 1, 1) output on the tape.
// Non-finite entries raise NumericError naming the column's block.
Eigen::MatrixXd output_jacobian(const std::function<Var(Tape&)>& forward,
                                std::span<Param* const> params,
                                std::span<const std::string> names = {});

// lambda_max / lambda_min of J J^T; +inf once lambda_min <= 1e-12 lambda_max.
double ntk_condition_number(const Eigen::MatrixXd& jacobian);
// n x n kernel over per-sample gradients of the summed logits. BatchNorm on
// probe statistics (running stats untouched), dropout off, pruner weights
// excluded from the Jacobian.
double ntk_condition_number(SupernetModel& model, const Tensor& probe);

// Distinct ReLU sign patterns over the samples of one forward call.
std::size_t count_activation_patterns(const std::function<void(Tape&)>& forward);
// Samples are evaluated in chunks with BatchNorm on running statistics, so a
// sample's pattern does not depend on the rest of the batch.
std::size_t count_linear_regions(SupernetModel& model, const Tensor& samples);
std::size_t count_linear_regions(SupernetModel& model, std::size_t samples, std::mt19937_64& rng);

// Index of the candidate with the largest rank sum (kappa descending plus
// LRC ascending). Ties go to lower kappa, then to the earlier entry.
std::size_t joint_rank(std::span<const MetricPair> candidates);
// The rank sums themselves, for reporting.
std::vector<std::size_t> joint_rank_scores(std::span<const MetricPair> candidates);

bool admits(const MetricPair& on, const MetricPair& off);

struct CandidateRow {
  EdgeId edge;
  MetricPair on;
  MetricPair off;
  bool admitted = false;
  std::string error;  // non-empty when measurement failed
};

struct SelectionResult {
  std::optional<EdgeId> edge;
  std::vector<CandidateRow> rows;
  std::optional<std::size_t> winner;  // index into rows
  std::size_t model_bytes = 0;
  std::size_t edge_bytes = 0;  // one full edge in the winner's cell
  std::size_t budget_bytes = 0;
  bool gate_passed = false;
};

struct SelectionOptions {
  std::size_t n_good = 5;
  std::size_t probe_size = 8;
  std::size_t lrc_samples = 500;
  std::size_t budget_bytes = 0;
  std::size_t batch_size = 64;
  // Called for every trial with (template, S_on, S_off, probe) before the
  // metrics are measured.
  std::function<void(SupernetModel&, SupernetModel&, SupernetModel&, const Tensor&)> observer;
};

// Slim copy, shuffled edge scan, on/off trial pairs, admission, joint rank
// and the memory gate s(M) + 2 s(edge) < budget.
SelectionResult select_mutation_ntklrc(SupernetModel& model, const SelectionOptions& options,
                                       std::mt19937_64& rng);

}  // namespace spidernet
