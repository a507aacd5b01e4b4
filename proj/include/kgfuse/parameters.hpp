#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kgfuse/rng.hpp"
#include "kgfuse/tensor.hpp"

namespace kgfuse {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named trainable tensors plus per-entry Adam state.
class ParameterSet {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    std::uint64_t step = 0;
  };

  ParameterSet() = default;
  // Copies own fresh tensors; gradients are not copied.
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) noexcept = default;
  ParameterSet& operator=(ParameterSet&&) noexcept = default;

  // Registers a leaf tensor. Trainable entries require gradients.
  const Tensor& add(const std::string& name, Tensor value, bool trainable = true);
  // Glorot-uniform weight of shape rows x cols.
  const Tensor& add_weight(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng);
  const Tensor& add_zeros(const std::string& name, std::size_t rows, std::size_t cols);

  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Tensor& operator[](const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  void set_trainable(const std::string& name, bool trainable);
  // Overwrites values in place; shape must match.
  void assign(const std::string& name, std::span<const double> values);
  void zero_grad();

  // Copy of every value, for best-epoch snapshots.
  std::map<std::string, std::vector<double>> snapshot() const;
  void restore(const std::map<std::string, std::vector<double>>& snap);

  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  friend void adam_step(ParameterSet&, const AdamOptions&);
  Entry& mutable_entry(const std::string& name);

  std::map<std::string, Entry> entries_;
};

// One bias-corrected Adam update of every trainable entry, then clears grads.
// A trainable entry without a gradient is a contract error.
void adam_step(ParameterSet& params, const AdamOptions& options);

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace kgfuse
