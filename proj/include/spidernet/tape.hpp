#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <vector>

#include "spidernet/tensor.hpp"

namespace spidernet {

enum class Mode { kTrain, kEval };

// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t index = 0;
};

// Reverse-mode record of one forward evaluation.
//
// Every primitive pushes its output together with a closure that, given the
// output gradient, accumulates into its inputs' gradients. Nodes are appended
// in execution order, so walking them backwards is a valid reverse
// topological order. Parameter leaves forward their accumulated gradient into
// the owning Param when backward() finishes.
//
// A Tape is single-threaded; distinct tapes are independent.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(Mode mode);

  Mode mode() const { return mode_; }
  bool recording() const { return recording_; }

  Var constant(Tensor value);
  Var param(Param& p);
  Var record(Tensor value, Backward backward);

  const Tensor& value(Var v) const { return nodes_[v.index].value; }
  const Tensor& value(std::uint32_t i) const { return nodes_[i].value; }
  // Gradient slot of a node, allocated (zeroed) on first access.
  Tensor& grad(Var v) { return grad(v.index); }
  Tensor& grad(std::uint32_t i);
  bool has_grad(std::uint32_t i) const { return nodes_[i].grad_live; }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root) = seed and propagates to every reachable node. Node
  // gradients from a previous call are discarded first, so one forward can
  // serve several backward passes (one per Jacobian row).
  void backward(Var root, const Tensor& seed);
  // Scalar root, seed 1.
  void backward(Var root);

  // Batch-statistics BatchNorm refreshes running statistics only when set.
  bool update_running_stats = true;
  // Dropout is active only in train mode with a generator attached.
  std::mt19937_64* dropout_rng = nullptr;

  // When enabled, relu() registers its output so activation sign patterns
  // can be read after the forward pass.
  void capture_relu_outputs(bool on) { capture_relu_ = on; }
  bool capturing_relu_outputs() const { return capture_relu_; }
  void note_relu_output(Var v) { relu_outputs_.push_back(v); }
  const std::vector<Var>& relu_outputs() const { return relu_outputs_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_live = false;
    Backward backward;
    Param* param = nullptr;
  };

  Mode mode_;
  bool recording_;
  bool capture_relu_ = false;
  std::deque<Node> nodes_;
  std::vector<Var> relu_outputs_;
};

}  // namespace spidernet
