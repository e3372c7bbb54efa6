#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sfunet/tensor.hpp"

namespace sfunet {

class Tape;

namespace detail {

struct NodeBase {
  virtual ~NodeBase() = default;
  virtual void reset_grad() = 0;

  /// Pushes this node's gradient into its inputs. Empty for leaves that
  /// have nowhere to send it.
  std::function<void()> backward;
  const Tape* tape = nullptr;
  std::size_t tape_index = 0;
};

template <typename T>
struct Node final : NodeBase {
  explicit Node(BasicTensor<T> v) : value(std::move(v)) {}

  void reset_grad() override { grad_ready = false; }

  /// Zero-initialized on first use in each backward sweep.
  BasicTensor<T>& grad_buffer() {
    if (!grad_ready) {
      if (grad.shape() != value.shape()) {
        grad = BasicTensor<T>(value.shape());
      } else {
        grad.fill(T{});
      }
      grad_ready = true;
    }
    return grad;
  }

  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool grad_ready = false;
  bool requires_grad = false;
};

}  // namespace detail

/// Handle to a value flowing through a forward pass. Copies share the
/// underlying node. Values are never mutated after construction.
template <typename T>
class BasicVar {
 public:
  using Node = detail::Node<T>;

  BasicVar() = default;
  /// A constant: never receives gradient.
  explicit BasicVar(BasicTensor<T> value)
      : node_(std::make_shared<Node>(std::move(value))) {}

  /// A differentiable leaf recorded on the active tape (if any). Its
  /// gradient is readable through grad() after Tape::backward.
  static BasicVar leaf(BasicTensor<T> value);

  bool defined() const { return node_ != nullptr; }
  const BasicTensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient from the last backward sweep, or nullptr if none reached it.
  const BasicTensor<T>* grad() const {
    return (node_ && node_->grad_ready) ? &node_->grad : nullptr;
  }

  /// Buffer that backward rules accumulate into; nullptr for constants.
  BasicTensor<T>* grad_sink() const {
    return requires_grad() ? &node_->grad_buffer() : nullptr;
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit BasicVar(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  template <typename U>
  friend BasicVar<U> make_result(BasicTensor<U>, bool,
                                 std::function<void(const BasicTensor<U>&)>);

  std::shared_ptr<Node> node_;
};

using Var = BasicVar<Real>;
using CVar = BasicVar<Complex>;

/// Ordered record of executed operations for one forward pass. Install it
/// with TapeScope; operations executed while it is active and touching a
/// gradient-carrying input are appended in execution order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Reverse sweep from a scalar `loss`. Gradients of parameters accumulate
  /// across calls until Parameter::zero_grad / ParameterRegistry::zero_grad.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  void record(std::shared_ptr<detail::NodeBase> node);

  /// Tape installed on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  friend class NoGradScope;
  std::vector<std::shared_ptr<detail::NodeBase>> nodes_;
};

/// Installs a tape as the thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Builds the output of an operation. When a tape is active and
/// `needs_grad` is set, the result is recorded and `backward` is invoked
/// with the output gradient during the reverse sweep.
template <typename T>
BasicVar<T> make_result(BasicTensor<T> value, bool needs_grad,
                        std::function<void(const BasicTensor<T>&)> backward) {
  auto node = std::make_shared<detail::Node<T>>(std::move(value));
  Tape* tape = Tape::active();
  if (tape != nullptr && needs_grad) {
    node->requires_grad = true;
    auto* raw = node.get();
    node->backward = [raw, fn = std::move(backward)]() {
      if (raw->grad_ready) fn(raw->grad);
    };
    tape->record(node);
  }
  return BasicVar<T>(std::move(node));
}

template <typename T>
BasicVar<T> BasicVar<T>::leaf(BasicTensor<T> value) {
  return make_result<T>(std::move(value), true,
                        [](const BasicTensor<T>&) {});
}

/// A named learnable tensor with its accumulated gradient.
struct Parameter {
  Parameter(std::string name, Tensor value, bool trainable = true);

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad.fill(Real{0}); }
};

/// Brings a parameter into the forward pass. With an active tape and a
/// trainable parameter the result is a leaf whose gradient lands in
/// `p.grad`; otherwise it is a constant.
Var use(Parameter& p);

/// Owns every Parameter of a model, in construction order.
class ParameterRegistry {
 public:
  ParameterRegistry() = default;
  ParameterRegistry(ParameterRegistry&&) = default;
  ParameterRegistry& operator=(ParameterRegistry&&) = default;

  /// Throws if the name already exists.
  Parameter& add(std::string name, Tensor value, bool trainable = true);

  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);

  std::vector<Parameter*> params() const;
  std::size_t size() const { return params_.size(); }

  void zero_grad();

  /// Number of scalar values over all parameters whose name starts with
  /// `prefix` (all parameters when empty).
  std::size_t count(std::string_view prefix = {}) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*, std::less<>> by_name_;
};

}  // namespace sfunet
