#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gptrans/errors.hpp"
#include "gptrans/tensor.hpp"

namespace gptrans {

/// A named trainable tensor with its gradient accumulator.
template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool decay = true;  // participates in decoupled weight decay
};

/// Ordered collection of named parameters. Iteration order is insertion order,
/// which is also the checkpoint order.
template <class T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other) { *this = other; }
  ParamStore& operator=(const ParamStore& other) {
    if (this == &other) return *this;
    params_.clear();
    index_.clear();
    for (const auto& p : other.params_) {
      Param<T>& q = add(p->name, p->value.shape(), p->decay);
      q.value = p->value;
      q.grad = p->grad;
    }
    return *this;
  }
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Param<T>& add(const std::string& name, const Shape& shape, bool decay) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->value = Tensor<T>(shape);
    p->grad = Tensor<T>(shape);
    p->decay = decay;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Param<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return *params_[it->second];
  }
  const Param<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter " + name);
    return *params_[it->second];
  }

  std::size_t size() const noexcept { return params_.size(); }
  Param<T>& operator[](std::size_t i) { return *params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T{0});
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) {
      Param<U>& q = out.add(p->name, p->value.shape(), p->decay);
      q.value = p->value.template cast<U>();
    }
    return out;
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  const std::vector<T>* external = nullptr;  // parameter storage for bound leaves
  std::vector<T> grad;
  bool requires_grad = false;
  std::function<void(Node&)> backward;

  std::span<const T> val() const {
    if (external) return std::span<const T>(*external);
    return std::span<const T>(value);
  }
  std::span<T> g() {
    if (grad.size() != numel(shape)) grad.assign(numel(shape), T{0});
    return grad;
  }
  bool has_grad() const { return !grad.empty(); }
};

template <class T>
class Tape;

/// Lightweight handle to a node on a tape.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, Node<T>* node) : tape_(tape), node_(node) {}

  bool defined() const noexcept { return node_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  Node<T>& node() const { return *node_; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return numel(node_->shape); }
  std::span<const T> value() const { return node_->val(); }
  std::span<const T> grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }

  T item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return value()[0];
  }
  Tensor<T> tensor() const {
    return Tensor<T>(shape(), std::vector<T>(value().begin(), value().end()));
  }
  Tensor<T> grad_tensor() const {
    if (!node_->has_grad()) return Tensor<T>(shape());
    return Tensor<T>(shape(), node_->grad);
  }

 private:
  Tape<T>* tape_ = nullptr;
  Node<T>* node_ = nullptr;
};

/// Records operations in execution order for reverse accumulation.
/// Single-writer: one forward/backward pass at a time.
template <class T>
class Tape {
 public:
  explicit Tape(bool track_params = true) : track_params_(track_params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool tracks_params() const noexcept { return track_params_; }

  Var<T> constant(Tensor<T> t) {
    auto n = std::make_unique<Node<T>>();
    n->shape = t.shape();
    n->value = std::move(t.vec());
    return push(std::move(n));
  }

  Var<T> leaf(Tensor<T> t, bool requires_grad = true) {
    auto n = std::make_unique<Node<T>>();
    n->shape = t.shape();
    n->value = std::move(t.vec());
    n->requires_grad = requires_grad;
    return push(std::move(n));
  }

  /// Binds a parameter as a leaf that views the store's storage.
  Var<T> param(Param<T>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return Var<T>(this, it->second);
    auto n = std::make_unique<Node<T>>();
    n->shape = p.value.shape();
    n->external = &p.value.vec();
    n->requires_grad = track_params_;
    Var<T> v = push(std::move(n));
    bound_[&p] = &v.node();
    bindings_.emplace_back(&p, &v.node());
    return v;
  }

  /// Appends an op result. `backward` receives the output node (with grad
  /// populated) and must accumulate into its inputs.
  Var<T> record(Shape shape, std::vector<T> value, std::initializer_list<Var<T>> inputs,
                std::function<void(Node<T>&)> backward) {
    auto n = std::make_unique<Node<T>>();
    if (value.size() != numel(shape)) throw ShapeError("op produced inconsistent value size");
    n->shape = std::move(shape);
    n->value = std::move(value);
    for (const auto& v : inputs) n->requires_grad = n->requires_grad || v.requires_grad();
    if (n->requires_grad) n->backward = std::move(backward);
    return push(std::move(n));
  }

  /// Reverse pass from a scalar loss. Intermediate grads are reset on each call;
  /// leaf grads accumulate across calls.
  void backward(const Var<T>& loss) {
    if (loss.size() != 1) throw ShapeError("backward needs a scalar loss, got " + shape_str(loss.shape()));
    for (auto& n : nodes_)
      if (n->backward && n->has_grad()) std::fill(n->grad.begin(), n->grad.end(), T{0});
    if (!loss.requires_grad()) return;
    loss.node().g()[0] += T{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<T>& n = **it;
      if (n.backward && n.has_grad()) n.backward(n);
    }
  }

  /// Adds `scale` times every bound parameter's gradient into the store.
  void accumulate_param_grads(T scale = T{1}) const {
    for (const auto& [p, n] : bindings_) {
      if (!n->has_grad()) continue;
      auto dst = p->grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * n->grad[i];
    }
  }

  const std::vector<std::pair<Param<T>*, Node<T>*>>& bindings() const noexcept { return bindings_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  Var<T> push(std::unique_ptr<Node<T>> n) {
    Node<T>* raw = n.get();
    nodes_.push_back(std::move(n));
    return Var<T>(this, raw);
  }

  bool track_params_;
  std::vector<std::unique_ptr<Node<T>>> nodes_;
  std::unordered_map<const Param<T>*, Node<T>*> bound_;
  std::vector<std::pair<Param<T>*, Node<T>*>> bindings_;
};

template <class T>
void backward(const Var<T>& loss) {
  loss.tape().backward(loss);
}

}  // namespace gptrans
