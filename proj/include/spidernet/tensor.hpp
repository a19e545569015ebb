#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace spidernet {

// NCHW extent. Classifier logits use (batch, classes, 1, 1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense 4-d tensor. Values are held in double precision so that reductions,
// Gram matrices and finite differences all run at 64 bits.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w;
  }
  double& at(int n, int c, int h, int w) { return data[index(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data[index(n, c, h, w)]; }

  void fill(double v);
  bool all_finite() const;
  double max_abs() const;
  double sum() const;
};

// A trainable array together with its gradient accumulator.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string param_name, Shape s);

  void zero_grad();
  std::size_t size() const { return value.size(); }
};

}  // namespace spidernet
