// Copyright 2026 The Mimic Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mimic/tensor.hpp"

#include <algorithm>

#include "mimic/error.hpp"

namespace mimic {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}

Tensor Tensor::zeros(Shape s, bool with_grad) {
  Tensor t(std::move(s));
  t.set_requires_grad(with_grad);
  return t;
}

Tensor::Tensor(Shape s, const std::vector<double>& values, bool with_grad)
    : Tensor(std::move(s), Buffer(values.begin(), values.end()), with_grad) {}

Tensor::Tensor(Shape s, std::initializer_list<double> values, bool with_grad)
    : Tensor(std::move(s), Buffer(values), with_grad) {}

Tensor::Tensor(Shape s, Buffer values, bool with_grad)
    : shape(std::move(s)), data(std::move(values)), requires_grad(with_grad) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("tensor buffer of " + std::to_string(data.size()) +
                     " values does not match shape " + shape_string(shape));
  }
  if (requires_grad) grad.assign(data.size(), 0.0);
}

Tensor Tensor::filled(Shape s, double value, bool with_grad) {
  Tensor t = zeros(std::move(s), with_grad);
  std::fill(t.data.begin(), t.data.end(), value);
  return t;
}

void Tensor::set_requires_grad(bool flag) {
  requires_grad = flag;
  if (flag) {
    grad.assign(data.size(), 0.0);
  } else {
    grad.clear();
  }
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void expect_shape(const Tensor& t, const Shape& expected, const std::string& operand) {
  if (t.shape != expected) {
    throw ShapeError(operand + ": expected shape " + shape_string(expected) + ", got " +
                     shape_string(t.shape));
  }
}

}  // namespace mimic
