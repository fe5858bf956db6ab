#include "stereoae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "stereoae/errors.hpp"

namespace stereoae {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) {
      throw ConfigError("shape " + shape_string(shape) + " has a non-positive extent");
    }
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << (i ? "," : "") << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
  const auto n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
  const auto n = shape_numel(shape);
  if (static_cast<std::int64_t>(values.size()) != n) {
    throw ConfigError("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                      shape_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!impl_) {
    throw UsageError("access to an undefined tensor");
  }
  return impl_->shape;
}

template <typename T>
int Tensor<T>::dim(int i) const {
  const auto& s = shape();
  if (i < 0) {
    i += static_cast<int>(s.size());
  }
  if (i < 0 || i >= static_cast<int>(s.size())) {
    throw UsageError("dimension index out of range for shape " + shape_string(s));
  }
  return s[static_cast<std::size_t>(i)];
}

template <typename T>
std::int64_t Tensor<T>::numel() const {
  return static_cast<std::int64_t>(impl_ ? impl_->data.size() : 0);
}

template <typename T>
std::span<T> Tensor<T>::data() {
  shape();
  return impl_->data;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  shape();
  return impl_->data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_string(shape()));
  }
  return impl_->data[0];
}

template <typename T>
T& Tensor<T>::at(int c, int y, int x) {
  const auto& s = impl_->shape;
  return impl_->data[(static_cast<std::size_t>(c) * s[1] + y) * s[2] + x];
}

template <typename T>
const T& Tensor<T>::at(int c, int y, int x) const {
  const auto& s = impl_->shape;
  return impl_->data[(static_cast<std::size_t>(c) * s[1] + y) * s[2] + x];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  shape();
  impl_->requires_grad = value;
  if (!value) {
    impl_->grad.clear();
  }
  return *this;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return impl_ && !impl_->grad.empty();
}

template <typename T>
std::span<T> Tensor<T>::grad() const {
  shape();
  if (impl_->grad.empty()) {
    impl_->grad.assign(impl_->data.size(), T(0));
  }
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto g = grad();
  std::fill(g.begin(), g.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor<T>(shape(), std::vector<T>(impl_->data));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ConfigError("cannot reshape " + shape_string(this->shape()) + " to " + shape_string(shape));
  }
  Tensor<T> out;
  out.impl_ = std::make_shared<Impl>();
  out.impl_->shape = std::move(shape);
  out.impl_->data = impl_->data;
  return out;
}

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& where) {
  const auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw NumericError(where + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

template <typename T>
bool Tape<T>::should_record(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!recording()) {
    return false;
  }
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<T>* t) { return t != nullptr && t->defined() && t->requires_grad(); });
}

template <typename T>
void Tape<T>::record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output, BackwardFn backward) {
  output.set_requires_grad(true);
  nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw UsageError("backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw UsageError("backward() on a loss that does not depend on any trainable tensor");
  }
  for (auto& node : nodes_) {
    node.output.zero_grad();
  }
  Tensor<T> seed = loss;
  seed.grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward();
  }
}

template <typename T>
bool Tape<T>::is_topologically_ordered() const {
  std::unordered_map<const void*, std::size_t> producer;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    producer.emplace(nodes_[i].output.id(), i);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& in : nodes_[i].inputs) {
      if (!in.defined()) {
        continue;
      }
      auto p = producer.find(in.id());
      if (p != producer.end() && p->second >= i) {
        return false;
      }
    }
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void check_finite(const Tensor<float>&, const std::string&);
template void check_finite(const Tensor<double>&, const std::string&);

}  // namespace stereoae
