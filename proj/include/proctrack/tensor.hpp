// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "proctrack/errors.hpp"
#include "proctrack/rng.hpp"

namespace proctrack {

// Dense row-major tensor of doubles. Rank is 1 or 2 everywhere in this
// project; shape is kept as a vector for uniform handling.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;

  static Tensor zeros(std::initializer_list<int> dims) {
    Tensor t;
    t.shape.assign(dims);
    t.data.assign(t.numel(), 0.0);
    return t;
  }

  static Tensor zeros(std::vector<int> dims) {
    Tensor t;
    t.shape = std::move(dims);
    t.data.assign(t.numel(), 0.0);
    return t;
  }

  static Tensor zeros_like(const Tensor& o) {
    Tensor t;
    t.shape = o.shape;
    t.data.assign(o.data.size(), 0.0);
    return t;
  }

  static Tensor full(std::initializer_list<int> dims, double v) {
    Tensor t = zeros(dims);
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t = zeros({1, 1});
    t.data[0] = v;
    return t;
  }

  static Tensor row(const std::vector<double>& v) {
    Tensor t;
    t.shape = {1, static_cast<int>(v.size())};
    t.data = v;
    return t;
  }

  static Tensor from(std::initializer_list<int> dims, std::vector<double> v) {
    Tensor t;
    t.shape.assign(dims);
    t.data = std::move(v);
    if (static_cast<std::size_t>(t.numel()) != t.data.size())
      throw NumericError("E_SHAPE", "tensor literal: shape does not match data length");
    return t;
  }

  static Tensor uniform(std::initializer_list<int> dims, Rng& rng,
                        double lo = -0.08, double hi = 0.08) {
    Tensor t = zeros(dims);
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
  }

  long numel() const {
    long n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace proctrack
