#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "spidernet/tape.hpp"
#include "spidernet/tensor.hpp"

namespace spidernet {

inline constexpr double kPrunerScale = 1e9;
inline constexpr double kPrunerInitLow = 0.05;
inline constexpr double kPrunerInitHigh = 0.15;

// 0 for w < 0, 1 otherwise.
double pruner_gate(double w);
// (M w - floor(M w)) / M, always in [0, 1/M).
double pruner_saw(double w, double m = kPrunerScale);

// Fixed-capacity ring of per-batch "gate was off" flags.
class UsageHistory {
 public:
  explicit UsageHistory(std::size_t capacity = 0);

  void push(bool off);
  void clear();
  // Changing the capacity discards the recorded window.
  void set_capacity(std::size_t capacity);

  std::size_t capacity() const { return buf_.size(); }
  std::size_t size() const { return count_; }
  bool full() const { return !buf_.empty() && count_ == buf_.size(); }
  std::size_t off_count() const;
  // Off-fraction over the full window; 0 when the window is not full.
  double off_fraction() const;

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

struct PrunerState {
  Param weight{"pruner", Shape{1, 1, 1, 1}};
  double m = kPrunerScale;
  UsageHistory off_history;

  double w() const { return weight.value.data[0]; }
  void set_w(double v) { weight.value.data[0] = v; }
  bool gate_off() const { return pruner_gate(w()) == 0.0; }
  double multiplier() const { return pruner_gate(w()) + pruner_saw(w(), m); }
  // Draws w from uniform[0.05, 0.15] and clears the usage window.
  void reinitialize(std::mt19937_64& rng);
};

// (Gate(w) + Saw(w)) * x. The backward pass uses a constant unit slope in w,
// so dL/dw = sum(dL/dy * x).
Var pruner_apply(Tape& tape, Var x, PrunerState& state);

}  // namespace spidernet
