#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgfuse/rng.hpp"

namespace kgfuse {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

// Dense row-major float64 array with an optional gradient slot.
//
// A Tensor is a cheap handle; copies share the same storage. Values are
// written once by the op that creates them. The exceptions are leaf tensors
// (parameters), whose values the optimizer and initializers update in place.
//
// Operations record a reverse-mode tape only when at least one input
// requires a gradient, so evaluation over constant parameters builds no graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor column(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Rank-2 view: rows() is shape[0], cols() the product of the rest.
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;

  std::span<const double> data() const;
  double at(std::size_t r, std::size_t c) const;
  double item() const;
  std::vector<double> row_values(std::size_t r) const;

  // Leaf-only mutation for optimizers and initializers.
  std::span<double> mutable_data();

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void clear_grad();

  // Same values, no history, no gradient requirement.
  Tensor detach() const;
  // Independent leaf copy of the values.
  Tensor clone(bool requires_grad) const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend struct TensorAccess;

  std::shared_ptr<detail::Node> node_;
};

enum class Activation { kSigmoid, kLeakyRelu, kIdentity };

inline constexpr double kLeakySlope = 0.01;

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation kind);

// ---- differentiable operations ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise with broadcasting of b: same shape, 1xN (per row), Mx1
// (per column) or 1x1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor apply_activation(Activation kind, const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// log(sigmoid(x)) without forming sigmoid(x).
Tensor log_sigmoid(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// Softmax within groups of rows sharing a segment id, independently per
// column. Every segment in [0, num_segments) that owns rows sums to one.
Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment,
                       std::size_t num_segments);
// out[s] = sum of rows r with segment[r] == s.
Tensor segment_sum(const Tensor& x, std::span<const std::size_t> segment,
                   std::size_t num_segments);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
Tensor concat_rows(std::initializer_list<Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, std::size_t rows, std::size_t cols);

// Elementwise max; ties send the gradient to the first argument.
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor row_sum(const Tensor& x);
Tensor rowwise_dot(const Tensor& a, const Tensor& b);

// Each row divided by its L2 norm; all-zero rows map to zero rows.
Tensor normalize_rows(const Tensor& x);

// Inverted dropout. Identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng);

// ---- reverse mode ------------------------------------------------------

// While alive, ops on this thread record no tape even for inputs that
// require gradients.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Populates grad() of every tensor that requires a gradient and took part in
// computing `loss`. Gradients accumulate into leaves across calls.
void backward(const Tensor& loss);

// Compares backward() gradients of `inputs` with central differences of f.
// Returns the max over coordinates of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-3)
// so near-zero gradients are judged on absolute error.
// Inputs must be leaves that require gradients; their grads are cleared on return.
double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> inputs,
                  double h = 1e-6);

}  // namespace kgfuse
