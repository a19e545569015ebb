#include "spidernet/pruner.hpp"

#include <algorithm>
#include <cmath>

namespace spidernet {

double pruner_gate(double w) { return w < 0.0 ? 0.0 : 1.0; }

double pruner_saw(double w, double m) {
  const double mw = m * w;
  return (mw - std::floor(mw)) / m;
}

UsageHistory::UsageHistory(std::size_t capacity) : buf_(capacity, 0) {}

void UsageHistory::push(bool off) {
  if (buf_.empty()) return;
  buf_[head_] = off ? 1 : 0;
  head_ = (head_ + 1) % buf_.size();
  count_ = std::min(count_ + 1, buf_.size());
}

void UsageHistory::clear() {
  std::fill(buf_.begin(), buf_.end(), 0);
  head_ = 0;
  count_ = 0;
}

void UsageHistory::set_capacity(std::size_t capacity) {
  if (capacity == buf_.size()) return;
  buf_.assign(capacity, 0);
  head_ = 0;
  count_ = 0;
}

std::size_t UsageHistory::off_count() const {
  return static_cast<std::size_t>(std::count(buf_.begin(), buf_.end(), std::uint8_t{1}));
}

double UsageHistory::off_fraction() const {
  if (!full()) return 0.0;
  return static_cast<double>(off_count()) / static_cast<double>(buf_.size());
}

void PrunerState::reinitialize(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(kPrunerInitLow, kPrunerInitHigh);
  set_w(dist(rng));
  weight.zero_grad();
  off_history.clear();
}

Var pruner_apply(Tape& tape, Var xv, PrunerState& state) {
  Var wv = tape.param(state.weight);
  const double w = tape.value(wv).data[0];
  const double mult = pruner_gate(w) + pruner_saw(w, state.m);
  Tensor out = tape.value(xv);
  for (double& v : out.data) v *= mult;
  return tape.record(std::move(out), [xv, wv, mult](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(xv);
    Tensor& gx = t.grad(xv);
    double gw = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx.data[i] += mult * g.data[i];
      gw += g.data[i] * x.data[i];
    }
    t.grad(wv).data[0] += gw;
  });
}

}  // namespace spidernet
