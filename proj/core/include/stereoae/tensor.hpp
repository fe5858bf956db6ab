#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stereoae {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array with an optional gradient buffer.
///
/// Tensor is a cheap handle: copies share storage. Use clone() for a deep
/// copy. The gradient buffer is allocated lazily the first time grad() is
/// requested on a tensor that requires grad.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T value) { return Tensor(Shape{1}, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int i) const;
  std::int64_t numel() const;

  std::span<T> data();
  std::span<const T> data() const;
  T item() const;

  T& operator[](std::int64_t i) { return data()[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data()[static_cast<std::size_t>(i)]; }

  // [C,H,W] element access.
  T& at(int c, int y, int x);
  const T& at(int c, int y, int x) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  // Lazily zero-filled. Writable through const handles, since handles
  // share storage.
  std::span<T> grad() const;
  void zero_grad();

  Tensor clone() const;
  // Deep copy under a new shape with the same element count.
  Tensor reshaped(Shape shape) const;

  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> out(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(out));
}

// Throws NumericError naming `where` if any element is NaN or Inf.
template <typename T>
void check_finite(const Tensor<T>& t, const std::string& where);

enum class TapeMode { record, inference };

/// Ordered record of differentiable operations for reverse-mode AD.
///
/// Ops append a node only when recording and at least one input requires
/// grad, so nodes are topologically ordered by construction. backward()
/// resets intermediate gradients, seeds d(loss)/d(loss) = 1 and visits each
/// node once in reverse; leaf gradients accumulate across calls.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::string op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    BackwardFn backward;
  };

  explicit Tape(TapeMode mode = TapeMode::record) : mode_(mode) {}

  bool recording() const { return mode_ == TapeMode::record; }
  bool should_record(std::initializer_list<const Tensor<T>*> inputs) const;

  void record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn backward);
  void backward(const Tensor<T>& loss);

  std::span<const Node> nodes() const { return nodes_; }
  bool is_topologically_ordered() const;
  void clear() { nodes_.clear(); }

 private:
  TapeMode mode_;
  std::vector<Node> nodes_;
};

}  // namespace stereoae
