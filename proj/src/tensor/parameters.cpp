#include "kgfuse/parameters.hpp"

#include <algorithm>
#include <cmath>

#include "kgfuse/error.hpp"

namespace kgfuse {

ParameterSet::ParameterSet(const ParameterSet& other) : entries_(other.entries_) {
  for (auto& [name, e] : entries_) e.value = e.value.clone(e.trainable);
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) *this = ParameterSet(other);
  return *this;
}

const Tensor& ParameterSet::add(const std::string& name, Tensor value, bool trainable) {
  if (entries_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  if (!value.is_leaf()) throw ContractError("parameter '" + name + "' must be a leaf tensor");
  Entry e;
  e.value = value.clone(trainable);
  e.trainable = trainable;
  e.first_moment.assign(e.value.size(), 0.0);
  e.second_moment.assign(e.value.size(), 0.0);
  return entries_.emplace(name, std::move(e)).first->second.value;
}

const Tensor& ParameterSet::add_weight(const std::string& name, std::size_t rows,
                                       std::size_t cols, Rng& rng) {
  return add(name, glorot_uniform(rows, cols, rng));
}

const Tensor& ParameterSet::add_zeros(const std::string& name, std::size_t rows,
                                      std::size_t cols) {
  return add(name, Tensor::zeros(rows, cols));
}

const ParameterSet::Entry& ParameterSet::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

ParameterSet::Entry& ParameterSet::mutable_entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterSet::operator[](const std::string& name) const {
  return entry(name).value;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

void ParameterSet::set_trainable(const std::string& name, bool trainable) {
  Entry& e = mutable_entry(name);
  if (e.trainable == trainable) return;
  e.value = e.value.clone(trainable);
  e.trainable = trainable;
}

void ParameterSet::assign(const std::string& name, std::span<const double> values) {
  Entry& e = mutable_entry(name);
  if (values.size() != e.value.size()) {
    throw DimensionError("assign to '" + name + "': expected " +
                         std::to_string(e.value.size()) + " values, got " +
                         std::to_string(values.size()));
  }
  std::ranges::copy(values, e.value.mutable_data().begin());
}

void ParameterSet::zero_grad() {
  for (auto& [_, e] : entries_) e.value.clear_grad();
}

std::map<std::string, std::vector<double>> ParameterSet::snapshot() const {
  std::map<std::string, std::vector<double>> snap;
  for (const auto& [name, e] : entries_) snap[name].assign(e.value.data().begin(), e.value.data().end());
  return snap;
}

void ParameterSet::restore(const std::map<std::string, std::vector<double>>& snap) {
  for (const auto& [name, values] : snap) assign(name, values);
}

void adam_step(ParameterSet& params, const AdamOptions& options) {
  for (auto& [name, e] : params.entries_) {
    if (!e.trainable) continue;
    if (!e.value.has_grad()) {
      throw ContractError("adam_step: parameter '" + name + "' has no gradient");
    }
  }
  for (auto& [name, e] : params.entries_) {
    if (!e.trainable) continue;
    ++e.step;
    const double t = static_cast<double>(e.step);
    const double c1 = 1.0 - std::pow(options.beta1, t);
    const double c2 = 1.0 - std::pow(options.beta2, t);
    auto grad = e.value.grad();
    auto value = e.value.mutable_data();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      e.first_moment[i] = options.beta1 * e.first_moment[i] + (1.0 - options.beta1) * g;
      e.second_moment[i] = options.beta2 * e.second_moment[i] + (1.0 - options.beta2) * g * g;
      const double m_hat = e.first_moment[i] / c1;
      const double v_hat = e.second_moment[i] / c2;
      value[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    }
    e.value.clear_grad();
  }
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-limit, limit);
  return Tensor::from({rows, cols}, std::move(v));
}

}  // namespace kgfuse
