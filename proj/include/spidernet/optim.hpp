#pragma once

#include <functional>
#include <span>

#include "spidernet/tape.hpp"
#include "spidernet/tensor.hpp"

namespace spidernet {

// Mean softmax cross-entropy of logits (batch, classes, 1, 1) against labels.
// Runs the backward pass, so every parameter reached from the logits has its
// gradient accumulated. Labels outside [0, classes) raise InputError.
double backprop_loss(Tape& tape, Var logits, std::span<const int> labels);

// base_lr * (1 + cos(pi * epoch / total_epochs)) / 2
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double base_lr);

// Plain SGD at the cosine-annealed rate, then zeroes the gradients.
// Returns the rate that was applied.
double sgd_cosine_step(std::span<Param* const> params, std::size_t epoch,
                       std::size_t total_epochs, double base_lr);

// Central-difference check of analytic gradients.
//
// `evaluate(with_gradients)` must compute the scalar objective from the
// current parameter values; when with_gradients is true it must also leave
// d(objective)/d(param) in each Param::grad (starting from zero). Returns
// max |analytic - numeric| / max(1, |analytic|) over every parameter element.
double finite_diff_gradcheck(const std::function<double(bool with_gradients)>& evaluate,
                             std::span<Param* const> params, double epsilon);

}  // namespace spidernet
