#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace safepaint::nn {

/// NCHW extent. Vectors are carried as (N,C,1,1), scalars as (1,1,1,1).
struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  size_t numel() const { return static_cast<size_t>(n) * c * h * w; }
  size_t plane() const { return static_cast<size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), data(s.numel(), fill) {}

  size_t index(int n, int c, int y, int x) const {
    return ((static_cast<size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x;
  }
  double& at(int n, int c, int y, int x) { return data[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data[index(n, c, y, x)]; }

  size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  double item() const { return data.at(0); }
};

}  // namespace safepaint::nn
