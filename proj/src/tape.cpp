#include "spidernet/tape.hpp"

#include "spidernet/errors.hpp"

namespace spidernet {

Tape::Tape(Mode mode) : mode_(mode), recording_(mode == Mode::kTrain) {}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(Param& p) {
  nodes_.push_back(Node{p.value, {}, false, {}, recording_ ? &p : nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, Backward backward) {
  nodes_.push_back(Node{std::move(value), {}, false,
                        recording_ ? std::move(backward) : Backward{}, nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad(std::uint32_t i) {
  Node& node = nodes_[i];
  if (!node.grad_live) {
    if (node.grad.shape == node.value.shape) {
      node.grad.fill(0.0);
    } else {
      node.grad = Tensor(node.value.shape);
    }
    node.grad_live = true;
  }
  return node.grad;
}

void Tape::backward(Var root, const Tensor& seed) {
  if (!recording_) throw RunError("backward() on a tape recorded in eval mode");
  if (seed.shape != value(root).shape) {
    throw InputError("backward seed shape " + seed.shape.str() + " does not match root " +
                     value(root).shape.str());
  }
  for (Node& node : nodes_) node.grad_live = false;
  Tensor& g = grad(root);
  g.data = seed.data;
  for (std::uint32_t i = root.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.grad_live) continue;
    if (node.backward) {
      node.backward(*this, i);
    } else if (node.param != nullptr) {
      auto& dst = node.param->grad.data;
      const auto& src = node.grad.data;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

void Tape::backward(Var root) {
  Tensor seed(value(root).shape, 1.0);
  backward(root, seed);
}

}  // namespace spidernet
