#include "spidernet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spidernet/errors.hpp"
#include "spidernet/primitives.hpp"

namespace spidernet {

double backprop_loss(Tape& tape, Var logits, std::span<const int> labels) {
  Var loss = ops::softmax_cross_entropy(tape, logits, labels);
  const double value = tape.value(loss).data[0];
  tape.backward(loss);
  return value;
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double base_lr) {
  if (total_epochs == 0) throw ConfigError("cosine schedule needs total_epochs >= 1");
  if (epoch > total_epochs) {
    throw ConfigError("epoch " + std::to_string(epoch) + " beyond schedule horizon " +
                      std::to_string(total_epochs));
  }
  if (epoch == total_epochs) return 0.0;
  const double t = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base_lr * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

double sgd_cosine_step(std::span<Param* const> params, std::size_t epoch,
                       std::size_t total_epochs, double base_lr) {
  const double lr = cosine_lr(epoch, total_epochs, base_lr);
  for (Param* p : params) {
    auto& v = p->value.data;
    auto& g = p->grad.data;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] -= lr * g[i];
      g[i] = 0.0;
    }
  }
  return lr;
}

double finite_diff_gradcheck(const std::function<double(bool)>& evaluate,
                             std::span<Param* const> params, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("gradcheck epsilon must be positive");
  for (Param* p : params) p->zero_grad();
  const double base = evaluate(true);
  if (!std::isfinite(base)) throw NumericError("gradcheck: objective is not finite");
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad.data);

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + epsilon;
      const double up = evaluate(false);
      p.value.data[i] = saved - epsilon;
      const double down = evaluate(false);
      p.value.data[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("gradcheck: objective not finite while perturbing " + p.name);
      }
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return worst;
}

}  // namespace spidernet
