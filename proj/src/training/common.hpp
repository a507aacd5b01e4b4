#pragma once

#include <chrono>
#include <vector>

#include "kgfuse/parameters.hpp"

namespace kgfuse::detail {

// Gives every trainable entry the backward pass did not reach an explicit
// zero gradient, so the optimizer treats it as unused rather than missing.
inline void fill_missing_grads(const ParameterSet& params) {
  for (const auto& [name, e] : params.entries()) {
    if (e.trainable && !e.value.has_grad()) backward(scale(sum(e.value), 0.0));
  }
}

// Consecutive chunks of at most `size`; a final chunk smaller than two is
// merged into the previous one.
template <typename T>
std::vector<std::vector<T>> make_batches(const std::vector<T>& items, std::size_t size) {
  std::vector<std::vector<T>> out;
  for (std::size_t i = 0; i < items.size(); i += size) {
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                     items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + size)));
  }
  if (out.size() > 1 && out.back().size() < 2) {
    auto tail = std::move(out.back());
    out.pop_back();
    out.back().insert(out.back().end(), tail.begin(), tail.end());
  }
  return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace kgfuse::detail
