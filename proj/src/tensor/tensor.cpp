#include "kgfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "kgfuse/error.hpp"

namespace kgfuse {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (!has_grad) {
      grad.assign(value.size(), 0.0);
      has_grad = true;
    }
    return grad;
  }
};

}  // namespace detail

using detail::Node;

struct TensorAccess {
  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

namespace {

thread_local int no_grad_depth = 0;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

const Node& node_of(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return *TensorAccess::node(t);
}

using BackwardFn = std::function<void(Node&)>;

// Creates an op result and records the tape entry if any input needs a gradient.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& in : inputs) {
    if (node_of(in).requires_grad && no_grad_depth == 0) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(TensorAccess::node(in));
    n->backward_fn = std::move(fn);
  }
  return TensorAccess::wrap(std::move(n));
}

Shape mat(std::size_t r, std::size_t c) { return Shape{r, c}; }

}  // namespace

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

// Broadcast b against a (see header for the accepted forms).
struct Broadcast {
  std::size_t rows, cols;
  bool b_row_stride, b_col_stride;
  std::size_t b_cols;

  std::size_t b_index(std::size_t i, std::size_t j) const {
    return (b_row_stride ? i : 0) * b_cols + (b_col_stride ? j : 0);
  }
};

Broadcast broadcast_of(const Tensor& a, const Tensor& b, const char* op) {
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  const bool rows_ok = br == ar || br == 1;
  const bool cols_ok = bc == ac || bc == 1;
  if (!rows_ok || !cols_ok) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) +
                         " to " + shape_string(a.shape()));
  }
  return Broadcast{ar, ac, br == ar && ar != 1, bc == ac && ac != 1, bc};
}

template <typename Fwd, typename GradA, typename GradB>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op, Fwd fwd,
                          GradA grad_a, GradB grad_b) {
  const Broadcast bc = broadcast_of(a, b, op);
  const auto& av = node_of(a).value;
  const auto& bv = node_of(b).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < bc.rows; ++i) {
    for (std::size_t j = 0; j < bc.cols; ++j) {
      const std::size_t k = i * bc.cols + j;
      out[k] = fwd(av[k], bv[bc.b_index(i, j)]);
    }
  }
  return make_result(a.shape(), std::move(out), {a, b}, [bc, grad_a, grad_b](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    for (std::size_t i = 0; i < bc.rows; ++i) {
      for (std::size_t j = 0; j < bc.cols; ++j) {
        const std::size_t k = i * bc.cols + j;
        const std::size_t kb = bc.b_index(i, j);
        const double g = self.grad[k];
        if (na.requires_grad) na.ensure_grad()[k] += grad_a(g, na.value[k], nb.value[kb]);
        if (nb.requires_grad) nb.ensure_grad()[kb] += grad_b(g, na.value[k], nb.value[kb]);
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto& xv = node_of(x).value;
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [deriv](Node& self) {
    Node& nx = *self.parents[0];
    auto& g = nx.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * deriv(nx.value[i], self.value[i]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_segments(std::span<const std::size_t> segment, std::size_t rows,
                    std::size_t num_segments, const char* op) {
  if (segment.size() != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(segment.size()) +
                         " segment ids for " + std::to_string(rows) + " rows");
  }
  for (auto s : segment) {
    if (s >= num_segments) {
      throw DimensionError(std::string(op) + ": segment id " + std::to_string(s) +
                           " out of range " + std::to_string(num_segments));
    }
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  if (product(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return from(mat(rows, cols), std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
  return from(mat(rows, cols), std::vector<double>(rows * cols, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(mat(1, 1), {value}, requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return from(mat(r, c), std::move(v), requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from(mat(1, n), std::move(values), requires_grad);
}

Tensor Tensor::column(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from(mat(n, 1), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }

std::size_t Tensor::rows() const { return shape()[0]; }

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return std::accumulate(s.begin() + 1, s.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t Tensor::size() const { return node_of(*this).value.size(); }

std::span<const double> Tensor::data() const { return node_of(*this).value; }

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw RangeError("tensor index out of range");
  return node_of(*this).value[r * cols() + c];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string(shape()));
  }
  return node_of(*this).value[0];
}

std::vector<double> Tensor::row_values(std::size_t r) const {
  const auto c = cols();
  const auto& v = node_of(*this).value;
  return {v.begin() + static_cast<std::ptrdiff_t>(r * c),
          v.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
}

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw ContractError("only leaf tensors may be mutated");
  return node_->value;
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }

bool Tensor::is_leaf() const { return !node_of(*this).backward_fn; }

bool Tensor::has_grad() const { return node_of(*this).has_grad; }

std::span<const double> Tensor::grad() const {
  const Node& n = node_of(*this);
  if (!n.has_grad) return {};
  return n.grad;
}

void Tensor::clear_grad() {
  Node& n = *node_;
  n.grad.clear();
  n.has_grad = false;
}

Tensor Tensor::detach() const {
  const Node& n = node_of(*this);
  return from(n.shape, n.value, false);
}

Tensor Tensor::clone(bool requires_grad) const {
  const Node& n = node_of(*this);
  return from(n.shape, n.value, requires_grad);
}

// ---- activations ------------------------------------------------------------

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kIdentity:
      return "identity";
  }
  throw ConfigError("unknown activation kind");
}

Tensor apply_activation(Activation kind, const Tensor& x) {
  switch (kind) {
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kLeakyRelu:
      return unary_elementwise(
          x, [](double v) { return v > 0 ? v : kLeakySlope * v; },
          [](double v, double) { return v > 0 ? 1.0 : kLeakySlope; });
    case Activation::kIdentity:
      return unary_elementwise(x, [](double v) { return v; },
                               [](double, double) { return 1.0; });
  }
  throw ConfigError("unknown activation kind");
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary_elementwise(x, [](double v) { return std::exp(v); },
                           [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0)) throw ContractError("log of non-positive value");
  }
  return unary_elementwise(x, [](double v) { return std::log(v); },
                           [](double v, double) { return 1.0 / v; });
}

Tensor log_sigmoid(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return stable_sigmoid(-v); });
}

// ---- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const auto& av = node_of(a).value;
  const auto& bv = node_of(b).value;
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return make_result(mat(m, n), std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const auto& g = self.grad;
    if (na.requires_grad) {
      auto& ga = na.ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = nb.value.data() + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = na.value[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  const auto& av = node_of(a).value;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_result(mat(n, m), std::move(out), {a}, [m, n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_elementwise(a, [factor](double v) { return v * factor; },
                           [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary_elementwise(a, [value](double v) { return v + value; },
                           [](double, double) { return 1.0; });
}

// ---- softmax family -------------------------------------------------------------

Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  const auto& xv = node_of(x).value;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [m, n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        g[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dot);
      }
    }
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  const auto& xv = node_of(x).value;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return make_result(x.shape(), std::move(out), {x}, [m, n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += self.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        g[i * n + j] += self.grad[i * n + j] - std::exp(self.value[i * n + j]) * gsum;
      }
    }
  });
}

Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment,
                       std::size_t num_segments) {
  const std::size_t e = scores.rows(), c = scores.cols();
  check_segments(segment, e, num_segments, "segment_softmax");
  const auto& sv = node_of(scores).value;
  std::vector<double> mx(num_segments * c, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < e; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      double& m = mx[segment[r] * c + j];
      m = std::max(m, sv[r * c + j]);
    }
  std::vector<double> out(e * c);
  std::vector<double> total(num_segments * c, 0.0);
  for (std::size_t r = 0; r < e; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const double v = std::exp(sv[r * c + j] - mx[segment[r] * c + j]);
      out[r * c + j] = v;
      total[segment[r] * c + j] += v;
    }
  for (std::size_t r = 0; r < e; ++r)
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] /= total[segment[r] * c + j];

  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return make_result(scores.shape(), std::move(out), {scores},
                     [seg = std::move(seg), num_segments, e, c](Node& self) {
                       std::vector<double> dot(num_segments * c, 0.0);
                       for (std::size_t r = 0; r < e; ++r)
                         for (std::size_t j = 0; j < c; ++j)
                           dot[seg[r] * c + j] += self.grad[r * c + j] * self.value[r * c + j];
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t r = 0; r < e; ++r)
                         for (std::size_t j = 0; j < c; ++j)
                           g[r * c + j] += self.value[r * c + j] *
                                           (self.grad[r * c + j] - dot[seg[r] * c + j]);
                     });
}

Tensor segment_sum(const Tensor& x, std::span<const std::size_t> segment,
                   std::size_t num_segments) {
  const std::size_t e = x.rows(), c = x.cols();
  check_segments(segment, e, num_segments, "segment_sum");
  const auto& xv = node_of(x).value;
  std::vector<double> out(num_segments * c, 0.0);
  for (std::size_t r = 0; r < e; ++r)
    for (std::size_t j = 0; j < c; ++j) out[segment[r] * c + j] += xv[r * c + j];
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return make_result(mat(num_segments, c), std::move(out), {x},
                     [seg = std::move(seg), e, c](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t r = 0; r < e; ++r)
                         for (std::size_t j = 0; j < c; ++j)
                           g[r * c + j] += self.grad[seg[r] * c + j];
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  const std::size_t rows = x.rows(), c = x.cols();
  const auto& xv = node_of(x).value;
  std::vector<double> out(index.size() * c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) {
      throw DimensionError("gather_rows: row " + std::to_string(index[i]) + " out of range " +
                           shape_string(x.shape()));
    }
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(index[i] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result(mat(index.size(), c), std::move(out), {x},
                     [idx = std::move(idx), c](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::size_t j = 0; j < c; ++j)
                           g[idx[i] * c + j] += self.grad[i * c + j];
                     });
}

// ---- structural -------------------------------------------------------------------

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row counts differ " + shape_string(parts[0].shape()) +
                           " vs " + shape_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = node_of(parts[k]).value;
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
    offset += widths[k];
  }
  return make_result(mat(m, total), std::move(out), {parts.begin(), parts.end()},
                     [widths, m, total](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         Node& p = *self.parents[k];
                         if (p.requires_grad) {
                           auto& g = p.ensure_grad();
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               g[i * widths[k] + j] += self.grad[i * total + off + j];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::vector<std::size_t> sizes;
  std::vector<double> out;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column counts differ " +
                           shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    }
    const auto& pv = node_of(p).value;
    out.insert(out.end(), pv.begin(), pv.end());
    sizes.push_back(pv.size());
    rows += p.rows();
  }
  return make_result(mat(rows, c), std::move(out), {parts.begin(), parts.end()},
                     [sizes](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < sizes.size(); ++k) {
                         Node& p = *self.parents[k];
                         if (p.requires_grad) {
                           auto& g = p.ensure_grad();
                           for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
                         }
                         off += sizes[k];
                       }
                     });
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_rows(std::initializer_list<Tensor> parts) {
  return concat_rows(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t m = x.rows(), n = x.cols();
  if (begin > end || end > n) throw DimensionError("slice_cols: bad range");
  const std::size_t w = end - begin;
  const auto& xv = node_of(x).value;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xv[i * n + begin + j];
  return make_result(mat(m, w), std::move(out), {x}, [m, n, w, begin](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t m = x.rows(), n = x.cols();
  if (begin > end || end > m) throw DimensionError("slice_rows: bad range");
  const auto& xv = node_of(x).value;
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          xv.begin() + static_cast<std::ptrdiff_t>(end * n));
  return make_result(mat(end - begin, n), std::move(out), {x}, [n, begin](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
}

Tensor reshape(const Tensor& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x.size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " +
                         shape_string(mat(rows, cols)));
  }
  return make_result(mat(rows, cols), node_of(x).value, {x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "maximum");
  return binary_elementwise(
      a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
      [](double g, double x, double y) { return x >= y ? g : 0.0; },
      [](double g, double x, double y) { return x >= y ? 0.0 : g; });
}

// ---- reductions ------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  const auto& xv = node_of(x).value;
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_result(mat(1, 1), {total}, {x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor row_sum(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  const auto& xv = node_of(x).value;
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += xv[i * n + j];
  return make_result(mat(m, 1), std::move(out), {x}, [m, n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i];
  });
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rowwise_dot");
  return row_sum(mul(a, b));
}

Tensor normalize_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  const auto& xv = node_of(x).value;
  std::vector<double> norms(m, 0.0);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += xv[i * n + j] * xv[i * n + j];
    norms[i] = std::sqrt(ss);
    if (norms[i] > 0.0)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / norms[i];
  }
  return make_result(x.shape(), std::move(out), {x},
                     [norms = std::move(norms), m, n](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < m; ++i) {
                         if (norms[i] == 0.0) continue;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j)
                           dot += self.grad[i * n + j] * self.value[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           g[i * n + j] += (self.grad[i * n + j] - self.value[i * n + j] * dot) /
                                           norms[i];
                       }
                     });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  std::vector<double> mask(x.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

// ---- reverse mode ------------------------------------------------------------------

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_string(loss.shape()));
  }
  const auto& root = TensorAccess::node(loss);
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.contains(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad) n->backward_fn(*n);
  }
}

double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> inputs, double h) {
  std::vector<Tensor> leaves(inputs.begin(), inputs.end());
  for (auto& t : leaves) {
    if (!t.is_leaf() || !t.requires_grad()) {
      throw ContractError("grad_check inputs must be leaves that require gradients");
    }
    t.clear_grad();
  }
  const Tensor y = f();
  if (y.size() != 1) {
    throw ContractError("grad_check requires a scalar function, got shape " +
                        shape_string(y.shape()));
  }
  backward(y);

  double worst = 0.0;
  for (auto& t : leaves) {
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) std::ranges::copy(t.grad(), analytic.begin());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  for (auto& t : leaves) t.clear_grad();
  return worst;
}

}  // namespace kgfuse
