#include "sfunet/autograd.hpp"

#include <stdexcept>

namespace sfunet {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<detail::NodeBase> node) {
  node->tape = this;
  node->tape_index = nodes_.size();
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Var& loss) {
  if (!loss.defined() || !loss.requires_grad() || loss.node()->tape != this) {
    throw std::logic_error(
        "backward: loss was not produced by a forward pass recorded on this "
        "tape");
  }
  if (loss.value().numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                to_string(loss.shape()));
  }
  for (auto& n : nodes_) n->reset_grad();
  loss.node()->grad_buffer()[0] = Real{1};
  for (std::size_t i = loss.node()->tape_index + 1; i-- > 0;) {
    if (nodes_[i]->backward) nodes_[i]->backward();
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }

NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Parameter::Parameter(std::string n, Tensor v, bool t)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()),
      trainable(t) {}

Var use(Parameter& p) {
  if (!p.trainable || Tape::active() == nullptr) return Var(p.value);
  Parameter* target = &p;
  return make_result<Real>(p.value, true, [target](const Tensor& g) {
    auto dst = target->grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

Parameter& ParameterRegistry::add(std::string name, Tensor value,
                                  bool trainable) {
  if (by_name_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  auto p = std::make_unique<Parameter>(name, std::move(value), trainable);
  Parameter& ref = *p;
  by_name_.emplace(std::move(name), p.get());
  params_.push_back(std::move(p));
  return ref;
}

Parameter* ParameterRegistry::find(std::string_view name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParameterRegistry::find(std::string_view name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

Parameter& ParameterRegistry::at(std::string_view name) {
  Parameter* p = find(name);
  if (p == nullptr) {
    throw std::out_of_range("unknown parameter: " + std::string(name));
  }
  return *p;
}

std::vector<Parameter*> ParameterRegistry::params() const {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterRegistry::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParameterRegistry::count(std::string_view prefix) const {
  std::size_t total = 0;
  for (const auto& p : params_) {
    if (std::string_view(p->name).starts_with(prefix)) total += p->value.numel();
  }
  return total;
}

}  // namespace sfunet
