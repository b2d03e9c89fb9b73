/* Copyright 2026 The sqakd Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef SQAKD_TENSOR_HPP_
#define SQAKD_TENSOR_HPP_

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sqakd/error.hpp"

namespace sqakd {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

template <typename T>
class Tape;

// Dense row-major array with an optional gradient buffer. Copies are shallow:
// two Tensor handles may share the same storage, which is how parameters
// receive gradient accumulation from a tape.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    if (NumElements(shape) != data.size()) {
      throw DimensionError("tensor of shape " + ShapeToString(shape) +
                           " cannot hold " + std::to_string(data.size()) +
                           " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor Zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = NumElements(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor Full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = NumElements(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor Scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  // Only optimizers and initializers write through this; ops never mutate
  // their inputs.
  std::span<T> mutable_data() { return impl_->data; }
  T item() const {
    if (impl_->data.size() != 1) {
      throw DimensionError("item() on tensor of shape " +
                           ShapeToString(impl_->shape));
    }
    return impl_->data[0];
  }
  T operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() {
    EnsureGrad();
    return impl_->grad;
  }
  std::vector<T> GradOrZeros() const {
    if (impl_->grad.empty()) return std::vector<T>(impl_->data.size(), T(0));
    return impl_->grad;
  }
  void ZeroGrad() { impl_->grad.clear(); }

  // Deep copy of the values with no gradient and no tape linkage.
  Tensor Detach() const { return Tensor(impl_->shape, impl_->data, false); }
  // Deep copy preserving requires_grad.
  Tensor Clone() const {
    return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
  }

  bool SharesStorageWith(const Tensor& other) const {
    return impl_ == other.impl_;
  }

 private:
  friend class Tape<T>;

  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  void EnsureGrad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  }

  std::shared_ptr<Impl> impl_;
};

namespace internal {
template <typename T>
inline thread_local Tape<T>* active_tape = nullptr;
}  // namespace internal

// Define-by-run recorder. Constructing a Tape makes it the active recorder on
// the calling thread until it is destroyed; ops whose inputs require grad
// append a record with a backward closure. Backward walks the records in
// reverse creation order, which is a valid topological order since every
// op's inputs exist before the op is recorded.
template <typename T>
class Tape {
 public:
  // Maps the upstream gradient of the output to one gradient per input. An
  // empty vector means "no contribution" for that input.
  using BackwardFn =
      std::function<std::vector<std::vector<T>>(std::span<const T> upstream)>;

  Tape() : previous_(internal::active_tape<T>) {
    internal::active_tape<T> = this;
  }
  ~Tape() { internal::active_tape<T> = previous_; }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* Active() { return internal::active_tape<T>; }

  // True when an op over `inputs` must be recorded on the active tape.
  static bool ShouldRecord(std::span<const Tensor<T>> inputs) {
    if (Active() == nullptr) return false;
    for (const auto& t : inputs) {
      if (t.defined() && t.requires_grad()) return true;
    }
    return false;
  }

  void Record(std::vector<Tensor<T>> inputs, Tensor<T>& output,
              BackwardFn backward) {
    output.set_requires_grad(true);
    records_.push_back({std::move(inputs), output, std::move(backward)});
  }

  std::size_t size() const { return records_.size(); }

  // Seeds d(root)/d(root) = 1 and propagates. The tape is cleared afterwards.
  void Backward(Tensor<T> root) {
    if (root.size() != 1) {
      throw DimensionError("backward root must be a single value, got " +
                           ShapeToString(root.shape()));
    }
    root.EnsureGrad();
    root.impl_->grad[0] += T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      auto& out = it->output;
      if (out.impl_->grad.empty()) continue;
      std::vector<std::vector<T>> grads = it->backward(out.impl_->grad);
      if (grads.size() != it->inputs.size()) {
        throw DimensionError("backward produced " +
                             std::to_string(grads.size()) +
                             " gradients for " +
                             std::to_string(it->inputs.size()) + " inputs");
      }
      for (std::size_t i = 0; i < grads.size(); ++i) {
        auto& in = it->inputs[i];
        if (!in.defined() || !in.requires_grad() || grads[i].empty()) continue;
        if (grads[i].size() != in.size()) {
          throw DimensionError("backward gradient has " +
                               std::to_string(grads[i].size()) +
                               " values for input of shape " +
                               ShapeToString(in.shape()));
        }
        in.EnsureGrad();
        auto& acc = in.impl_->grad;
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += grads[i][k];
      }
    }
    records_.clear();
  }

 private:
  struct Entry {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn backward;
  };

  std::vector<Entry> records_;
  Tape* previous_;
};

// Suspends recording on this thread for the guard's lifetime.
template <typename T>
class NoGradGuard {
 public:
  NoGradGuard() : saved_(internal::active_tape<T>) {
    internal::active_tape<T> = nullptr;
  }
  ~NoGradGuard() { internal::active_tape<T> = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape<T>* saved_;
};

template <typename T>
void CheckFinite(std::span<const T> values, const char* where) {
  for (const T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + where);
    }
  }
}

}  // namespace sqakd

#endif  // SQAKD_TENSOR_HPP_
