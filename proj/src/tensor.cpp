#include "spidernet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace spidernet {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

Tensor::Tensor(Shape s, double fill_value) : shape(s), data(s.numel(), fill_value) {}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data) m = std::max(m, std::abs(v));
  return m;
}

double Tensor::sum() const { return std::accumulate(data.begin(), data.end(), 0.0); }

Param::Param(std::string param_name, Shape s)
    : name(std::move(param_name)), value(s), grad(s) {}

void Param::zero_grad() { grad.fill(0.0); }

}  // namespace spidernet
