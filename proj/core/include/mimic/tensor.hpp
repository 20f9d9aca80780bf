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

#ifndef MIMIC_TENSOR_HPP_
#define MIMIC_TENSOR_HPP_

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace mimic {

using Shape = std::vector<int>;

// 64-byte aligned storage. Vectorized reductions peel a number of leading
// elements that depends on the address, so buffers must start on a fixed
// boundary for results to repeat from run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major buffer with an optional gradient of identical shape.
struct Tensor {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty unless requires_grad
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, Buffer values, bool with_grad = false);
  Tensor(Shape s, const std::vector<double>& values, bool with_grad = false);
  Tensor(Shape s, std::initializer_list<double> values, bool with_grad = false);

  static Tensor zeros(Shape s, bool with_grad = false);
  static Tensor filled(Shape s, double value, bool with_grad = false);

  std::size_t numel() const { return data.size(); }
  int dim(int axis) const { return shape.at(static_cast<std::size_t>(axis)); }
  int rank() const { return static_cast<int>(shape.size()); }

  // Enables or disables gradient tracking; enabling allocates a zeroed grad.
  void set_requires_grad(bool flag);
  void zero_grad();

  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }
};

// Throws ShapeError when `t` does not have exactly `expected` extents.
void expect_shape(const Tensor& t, const Shape& expected, const std::string& operand);

// Mutable view of a parameter for optimizers: value and gradient spans of
// equal length.
struct ParamRef {
  std::span<double> value;
  std::span<double> grad;
};

inline ParamRef param_ref(Tensor& t) { return {t.data, t.grad}; }

}  // namespace mimic

#endif  // MIMIC_TENSOR_HPP_
