#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mininet/error.hpp"

namespace mininet {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename T>
class Tape;

/// Dense row-major n-d array. Copies share storage; image tensors are NCHW.
///
/// A tensor produced while a Tape is recording carries a node handle on that
/// tape. Untracked tensors are treated as immutable values, with the single
/// exception of parameters updated in place by the optimizer between steps.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(std::make_shared<std::vector<T>>()) {}

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(static_cast<std::size_t>(numel(shape_)), fill)) {
    validate_shape();
  }

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::make_shared<std::vector<T>>(std::move(values))) {
    validate_shape();
    if (static_cast<std::int64_t>(data_->size()) != numel(shape_)) {
      throw InvalidShape("tensor data length " + std::to_string(data_->size()) +
                         " does not match shape " + to_string(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_->size()); }
  bool empty() const { return data_->empty(); }

  std::span<const T> data() const { return {data_->data(), data_->size()}; }
  std::span<T> mutable_data() { return {data_->data(), data_->size()}; }
  const T* ptr() const { return data_->data(); }
  T* mutable_ptr() { return data_->data(); }

  T operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }
  T item() const {
    if (data_->size() != 1) throw ContractViolation("item() on tensor of shape " + to_string(shape_));
    return (*data_)[0];
  }
  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return (*data_)[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  /// Deep copy with no tape participation.
  Tensor clone() const { return Tensor(shape_, *data_); }
  /// Same storage, no tape participation.
  Tensor detach() const {
    Tensor out = *this;
    out.tape_ = nullptr;
    out.node_ = -1;
    return out;
  }
  /// Same storage viewed with a new shape of equal element count.
  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size()) {
      throw InvalidShape("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  bool tracked() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  int node() const { return node_; }
  bool same_storage(const Tensor& other) const { return data_ == other.data_; }
  const void* storage_id() const { return data_.get(); }

 private:
  friend class Tape<T>;

  void validate_shape() const {
    for (auto d : shape_) {
      if (d < 0) throw InvalidShape("negative dimension in " + to_string(shape_));
    }
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

/// Receives the output gradient and accumulates into the gradients of each
/// input. Entries for untracked inputs are empty spans.
template <typename T>
using BackwardFn = std::function<void(std::span<const T> grad_out, std::span<const std::span<T>> grad_in)>;

/// Append-only record of differentiable operations. Inputs always precede the
/// nodes that consume them, so one reverse sweep yields all gradients.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf. Watching the same storage twice returns the same node,
  /// so a weight used in several places accumulates one gradient.
  Tensor<T> watch(const Tensor<T>& leaf) {
    if (leaf.tape_ == this) return leaf;
    if (leaf.tape_ != nullptr) throw ContractViolation("tensor already belongs to another tape");
    auto it = leaves_.find(leaf.storage_id());
    Tensor<T> out = leaf;
    if (it != leaves_.end()) {
      out.tape_ = this;
      out.node_ = it->second;
      return out;
    }
    int id = push_node({}, nullptr, leaf.shape_);
    leaves_.emplace(leaf.storage_id(), id);
    out.tape_ = this;
    out.node_ = id;
    return out;
  }

  /// Records `value` as the result of an operation over `inputs`.
  Tensor<T> record(Tensor<T> value, const std::vector<Tensor<T>>& inputs, BackwardFn<T> fn) {
    if (done_) throw ContractViolation("cannot record onto a tape after backward()");
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const auto& in : inputs) {
      if (in.tape_ != nullptr && in.tape_ != this) {
        throw ContractViolation("operation mixes tensors from different tapes");
      }
      ids.push_back(in.tape_ == this ? in.node_ : -1);
    }
    value.tape_ = this;
    value.node_ = push_node(std::move(ids), std::move(fn), value.shape_);
    return value;
  }

  void backward(const Tensor<T>& root) {
    if (root.tape_ != this) throw ContractViolation("backward root is not tracked on this tape");
    if (root.size() != 1) {
      throw ContractViolation("backward root must be scalar, got shape " + to_string(root.shape_));
    }
    if (done_) throw ContractViolation("backward() called twice without reset()");
    done_ = true;
    grads_.assign(nodes_.size(), {});
    grads_[static_cast<std::size_t>(root.node_)].assign(1, T(1));
    std::vector<std::span<T>> in_grads;
    for (int id = root.node_; id >= 0; --id) {
      auto& node = nodes_[static_cast<std::size_t>(id)];
      auto& g = grads_[static_cast<std::size_t>(id)];
      if (g.empty() || !node.fn) continue;
      in_grads.clear();
      for (int in : node.inputs) {
        if (in < 0) {
          in_grads.emplace_back();
          continue;
        }
        auto& gi = grads_[static_cast<std::size_t>(in)];
        if (gi.empty()) gi.assign(static_cast<std::size_t>(numel(nodes_[static_cast<std::size_t>(in)].shape)), T(0));
        in_grads.emplace_back(gi.data(), gi.size());
      }
      node.fn(std::span<const T>(g.data(), g.size()), std::span<const std::span<T>>(in_grads.data(), in_grads.size()));
    }
  }

  /// Gradient of the last backward root w.r.t. `t`; zeros if unreachable.
  Tensor<T> grad(const Tensor<T>& t) const {
    if (!done_) throw ContractViolation("grad() requested before backward()");
    int id = t.tape_ == this ? t.node_ : -1;
    if (id < 0) {
      auto it = leaves_.find(t.storage_id());
      if (it == leaves_.end()) return Tensor<T>(t.shape_);
      id = it->second;
    }
    const auto& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty()) return Tensor<T>(nodes_[static_cast<std::size_t>(id)].shape);
    return Tensor<T>(nodes_[static_cast<std::size_t>(id)].shape, g);
  }

  void reset() {
    nodes_.clear();
    grads_.clear();
    leaves_.clear();
    done_ = false;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> inputs;
    BackwardFn<T> fn;
    Shape shape;
  };

  int push_node(std::vector<int> inputs, BackwardFn<T> fn, Shape shape) {
    nodes_.push_back(Node{std::move(inputs), std::move(fn), std::move(shape)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  std::unordered_map<const void*, int> leaves_;
  bool done_ = false;
};

/// Returns the tape shared by the tracked inputs, or nullptr if none is tracked.
template <typename T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = nullptr;
  for (const auto* t : inputs) {
    if (t->tape() == nullptr) continue;
    if (tape != nullptr && tape != t->tape()) throw ContractViolation("operation mixes tensors from different tapes");
    tape = t->tape();
  }
  return tape;
}

/// Watches `param` on `tape` when one is given; identity otherwise.
template <typename T>
Tensor<T> bind(Tape<T>* tape, const Tensor<T>& param) {
  return tape ? tape->watch(param) : param;
}

}  // namespace mininet
