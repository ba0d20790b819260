#include "pedintent/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "pedintent/errors.hpp"

namespace pedintent {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace detail {
std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  if (axis < -r || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

template <typename T>
void check_finite(const std::vector<T>& values, const char* op) {
  for (const T v : values) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op);
  }
}

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

// Wraps an op's output; records history only when some input is tracked.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<NodePtr<T>> inputs,
                      std::function<void(detail::Node<T>&)> backward_fn) {
  check_finite(values, op);
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->id = detail::next_node_id();
  node->op = op;
  const bool tracked = grad_enabled() && std::any_of(inputs.begin(), inputs.end(), [](const auto& n) {
                         return n->requires_grad;
                       });
  if (tracked) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
T* grad_of(const NodePtr<T>& n) {
  return n->requires_grad ? n->grad_buffer().data() : nullptr;
}

// C(m×n) += A(m×k) · B(k×n), in register tiles of kRows × kCols
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  constexpr std::size_t kRows = 4, kCols = 16 / sizeof(T) * 2;
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) {
    std::size_t j = 0;
    for (; j + kCols <= n; j += kCols) {
      T acc[kRows][kCols] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n + j;
        for (std::size_t r = 0; r < kRows; ++r) {
          const T av = a[(i + r) * k + p];
          for (std::size_t q = 0; q < kCols; ++q) acc[r][q] += av * brow[q];
        }
      }
      for (std::size_t r = 0; r < kRows; ++r)
        for (std::size_t q = 0; q < kCols; ++q) c[(i + r) * n + j + q] += acc[r][q];
    }
    for (std::size_t r = 0; r < kRows; ++r) {
      T* crow = c + (i + r) * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[(i + r) * k + p];
        for (std::size_t jj = j; jj < n; ++jj) crow[jj] += av * b[p * n + jj];
      }
    }
  }
  for (; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void transpose_into(const T* src, T* dst, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

// Output shape for the suffix-broadcast elementwise ops.
Shape broadcast_suffix(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

template <typename T>
Tensor<T> unary(const char* op, const Tensor<T>& x, T (*fwd)(T),
                T (*dfdx)(T x, T y)) {
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result<T>(op, x.shape(), std::move(out), {x.node()}, [dfdx](detail::Node<T>& self) {
    auto& in = self.inputs[0];
    T* g = grad_of(in);
    if (!g) return;
    for (std::size_t i = 0; i < self.value.size(); ++i)
      g[i] += self.grad[i] * dfdx(in->value[i], self.value[i]);
  });
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Mask::Mask(Shape s, std::vector<std::uint8_t> a) : shape(std::move(s)), allowed(std::move(a)) {
  if (shape_numel(shape) != allowed.size()) throw DimensionError("mask size does not match shape");
}

bool Mask::at(std::size_t row, std::size_t col) const {
  return allowed.at(row * shape.back() + col) != 0;
}

// ---- Tensor ---------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  check_finite(values, "tensor construction");
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  node_->id = detail::next_node_id();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::ptrdiff_t axis) const {
  return shape()[normalize_axis(axis, rank())];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return shape_numel(shape());
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  shape();
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  shape();
  if (!node_->is_leaf()) throw ContractError("in-place write to a non-leaf tensor");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  shape();
  if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = flag;
  return *this;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  shape();
  return node_->grad_buffer();
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), T(0));
}

template <typename T>
std::uint64_t Tensor<T>::node_id() const {
  shape();
  return node_->id;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  shape();
  return node_->is_leaf();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node_->value, false);
}

// ---- tape / backward ------------------------------------------------------

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
  Tape tape;
  if (!root.defined()) return tape;
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<NodePtr<T>> stack{root.node()};
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    if (n->is_leaf() || !seen.insert(n.get()).second) continue;
    for (const auto& in : n->inputs) stack.push_back(in);
    tape.ops_.push_back(std::move(n));
  }
  std::sort(tape.ops_.begin(), tape.ops_.end(),
            [](const auto& a, const auto& b) { return a->id < b->id; });
  return tape;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw ContractError("backward(): loss is not attached to any tracked tensor");
  if (loss.is_leaf()) {
    loss.node()->grad_buffer()[0] += T(1);
    return;
  }
  const auto tape = Tape<T>::record(loss);
  for (const auto& n : tape.ops()) n->grad.assign(n->value.size(), T(0));
  loss.node()->grad[0] = T(1);
  for (auto it = tape.ops().rbegin(); it != tape.ops().rend(); ++it) (*it)->backward(**it);
  for (const auto& n : tape.ops()) {
    n->backward = nullptr;
    n->inputs.clear();
    n->grad.clear();
    n->requires_grad = false;
  }
}

// ---- matmul ---------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) throw DimensionError("matmul needs rank >= 2 operands");
  const std::size_t m = as[as.size() - 2], k = as.back();
  const std::size_t k2 = bs[bs.size() - 2], n = bs.back();
  if (k != k2) {
    throw DimensionError("matmul: inner dims differ " + shape_str(as) + " x " + shape_str(bs));
  }
  const Shape abatch(as.begin(), as.end() - 2), bbatch(bs.begin(), bs.end() - 2);
  const std::size_t out_rank = std::max(abatch.size(), bbatch.size());
  Shape batch(out_rank);
  for (std::size_t i = 0; i < out_rank; ++i) {
    const std::size_t ad = i + abatch.size() >= out_rank ? abatch[i + abatch.size() - out_rank] : 1;
    const std::size_t bd = i + bbatch.size() >= out_rank ? bbatch[i + bbatch.size() - out_rank] : 1;
    if (ad != bd && ad != 1 && bd != 1) {
      throw DimensionError("matmul: batch dims not broadcastable " + shape_str(as) + " x " +
                           shape_str(bs));
    }
    batch[i] = std::max(ad, bd);
  }
  const std::size_t nb = shape_numel(batch);
  // Per output batch entry, the offsets of the operand matrices.
  auto offsets = std::make_shared<std::vector<std::pair<std::size_t, std::size_t>>>(nb);
  {
    std::vector<std::size_t> idx(out_rank, 0);
    for (std::size_t bi = 0; bi < nb; ++bi) {
      std::size_t ao = 0, bo = 0;
      for (std::size_t i = 0; i < out_rank; ++i) {
        if (i + abatch.size() >= out_rank) {
          const std::size_t d = abatch[i + abatch.size() - out_rank];
          ao = ao * d + (d == 1 ? 0 : idx[i]);
        }
        if (i + bbatch.size() >= out_rank) {
          const std::size_t d = bbatch[i + bbatch.size() - out_rank];
          bo = bo * d + (d == 1 ? 0 : idx[i]);
        }
      }
      (*offsets)[bi] = {ao * m * k, bo * k * n};
      for (std::size_t i = out_rank; i-- > 0;) {
        if (++idx[i] < batch[i]) break;
        idx[i] = 0;
      }
    }
  }
  std::vector<T> out(nb * m * n, T(0));
  const T* av = a.data().data();
  const T* bv = b.data().data();
  for (std::size_t bi = 0; bi < nb; ++bi) {
    gemm_acc(av + (*offsets)[bi].first, bv + (*offsets)[bi].second, out.data() + bi * m * n, m, k, n);
  }
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  return make_result<T>("matmul", std::move(out_shape), std::move(out), {a.node(), b.node()},
                        [offsets, m, k, n](detail::Node<T>& self) {
                          auto& an = self.inputs[0];
                          auto& bn = self.inputs[1];
                          T* ga = grad_of(an);
                          T* gb = grad_of(bn);
                          std::vector<T> scratch;
                          for (std::size_t bi = 0; bi < offsets->size(); ++bi) {
                            const T* g = self.grad.data() + bi * m * n;
                            const auto [ao, bo] = (*offsets)[bi];
                            if (ga) {
                              scratch.resize(n * k);
                              transpose_into(bn->value.data() + bo, scratch.data(), k, n);
                              gemm_acc(g, scratch.data(), ga + ao, m, n, k);
                            }
                            if (gb) {
                              scratch.resize(k * m);
                              transpose_into(an->value.data() + ao, scratch.data(), m, k);
                              gemm_acc(scratch.data(), g, gb + bo, k, m, n);
                            }
                          }
                        });
}

// ---- elementwise binary ---------------------------------------------------

namespace {

enum class BinOp { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const char* name, BinOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape out_shape = broadcast_suffix(a.shape(), b.shape(), name);
  const std::size_t n = shape_numel(out_shape);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  const std::size_t na = av.size(), nbv = bv.size();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = av[i % na], y = bv[i % nbv];
    switch (op) {
      case BinOp::kAdd: out[i] = x + y; break;
      case BinOp::kSub: out[i] = x - y; break;
      case BinOp::kMul: out[i] = x * y; break;
    }
  }
  return make_result<T>(name, out_shape, std::move(out), {a.node(), b.node()},
                        [op](detail::Node<T>& self) {
                          auto& an = self.inputs[0];
                          auto& bn = self.inputs[1];
                          T* ga = grad_of(an);
                          T* gb = grad_of(bn);
                          const std::size_t na = an->value.size(), nb = bn->value.size();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            const T g = self.grad[i];
                            switch (op) {
                              case BinOp::kAdd:
                                if (ga) ga[i % na] += g;
                                if (gb) gb[i % nb] += g;
                                break;
                              case BinOp::kSub:
                                if (ga) ga[i % na] += g;
                                if (gb) gb[i % nb] -= g;
                                break;
                              case BinOp::kMul:
                                if (ga) ga[i % na] += g * bn->value[i % nb];
                                if (gb) gb[i % nb] += g * an->value[i % na];
                                break;
                            }
                          }
                        });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("add", BinOp::kAdd, a, b);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("sub", BinOp::kSub, a, b);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("mul", BinOp::kMul, a, b);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return make_result<T>("scale", x.shape(), std::move(out), {x.node()}, [factor](detail::Node<T>& self) {
    T* g = grad_of(self.inputs[0]);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + offset;
  return make_result<T>("add_scalar", x.shape(), std::move(out), {x.node()}, [](detail::Node<T>& self) {
    T* g = grad_of(self.inputs[0]);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

// ---- elementwise unary ----------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  return unary<T>(
      "gelu", x,
      [](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::sqrt(T(2)))); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v / std::sqrt(T(2))));
        const T pdf = std::exp(T(-0.5) * v * v) / std::sqrt(T(2) * T(3.14159265358979323846));
        return cdf + v * pdf;
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(xv[i], lo), hi);
  return make_result<T>("clamp", x.shape(), std::move(out), {x.node()}, [lo, hi](detail::Node<T>& self) {
    auto& in = self.inputs[0];
    T* g = grad_of(in);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T v = in->value[i];
      if (v >= lo && v <= hi) g[i] += self.grad[i];
    }
  });
}

// ---- reductions -----------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (const T v : x.data()) acc += v;
  return make_result<T>("sum", Shape{}, {acc}, {x.node()}, [](detail::Node<T>& self) {
    auto& in = self.inputs[0];
    T* g = grad_of(in);
    if (!g) return;
    for (std::size_t i = 0; i < in->value.size(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& x, std::ptrdiff_t axis_in) {
  const Shape& s = x.shape();
  const std::size_t axis = normalize_axis(axis_in, s.size());
  const std::size_t len = s[axis];
  if (len == 0) throw ContractError("mean over an empty axis");
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t inner = shape_numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
  const auto& xv = x.node()->value;
  std::vector<T> out(outer * inner, T(0));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * len + l) * inner + i];
  const T inv = T(1) / static_cast<T>(len);
  for (auto& v : out) v *= inv;
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return make_result<T>("mean_over_axis", std::move(out_shape), std::move(out), {x.node()},
                        [outer, len, inner, inv](detail::Node<T>& self) {
                          T* g = grad_of(self.inputs[0]);
                          if (!g) return;
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t l = 0; l < len; ++l)
                              for (std::size_t i = 0; i < inner; ++i)
                                g[(o * len + l) * inner + i] += self.grad[o * inner + i] * inv;
                        });
}

// ---- structural -----------------------------------------------------------

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis_in) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  const std::size_t axis = normalize_axis(axis_in, first.size());
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> chunk;  // contiguous run length per outer index, per part
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first));
    }
    out_shape[axis] += s[axis];
    chunk.push_back(shape_numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis), s.end())));
  }
  const std::size_t outer = shape_numel(Shape(first.begin(), first.begin() + static_cast<std::ptrdiff_t>(axis)));
  std::vector<T> out;
  out.reserve(shape_numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const T* src = parts[p].data().data() + o * chunk[p];
      out.insert(out.end(), src, src + chunk[p]);
    }
  std::vector<NodePtr<T>> inputs;
  for (const auto& p : parts) inputs.push_back(p.node());
  return make_result<T>("concat", std::move(out_shape), std::move(out), std::move(inputs),
                        [outer, chunk](detail::Node<T>& self) {
                          std::size_t pos = 0;
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t p = 0; p < chunk.size(); ++p) {
                              T* g = grad_of(self.inputs[p]);
                              if (g) {
                                for (std::size_t i = 0; i < chunk[p]; ++i)
                                  g[o * chunk[p] + i] += self.grad[pos + i];
                              }
                              pos += chunk[p];
                            }
                        });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::ptrdiff_t axis_in, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  const std::size_t axis = normalize_axis(axis_in, s.size());
  if (begin > end || end > s[axis]) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for axis of length " + std::to_string(s[axis]));
  }
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t inner = shape_numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
  const std::size_t len = s[axis], width = end - begin;
  const auto& xv = x.node()->value;
  std::vector<T> out;
  out.reserve(outer * width * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    const auto first = xv.begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(width * inner));
  }
  Shape out_shape = s;
  out_shape[axis] = width;
  return make_result<T>("slice", std::move(out_shape), std::move(out), {x.node()},
                        [outer, inner, len, begin, width](detail::Node<T>& self) {
                          T* g = grad_of(self.inputs[0]);
                          if (!g) return;
                          for (std::size_t o = 0; o < outer; ++o)
                            for (std::size_t i = 0; i < width * inner; ++i)
                              g[(o * len + begin) * inner + i] += self.grad[o * width * inner + i];
                        });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  const std::size_t rank = s.size();
  if (axes.size() != rank) throw DimensionError("permute: axes length != rank");
  std::vector<bool> used(rank, false);
  for (auto a : axes) {
    if (a >= rank || used[a]) throw DimensionError("permute: axes are not a permutation");
    used[a] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * s[d];
  Shape out_shape(rank);
  std::vector<std::size_t> stride_of_out(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = s[axes[d]];
    stride_of_out[d] = in_strides[axes[d]];
  }
  const std::size_t n = x.numel();
  // Source offset for every output element.
  auto src_index = std::make_shared<std::vector<std::size_t>>(n);
  {
    std::vector<std::size_t> idx(rank, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      (*src_index)[i] = off;
      for (std::size_t d = rank; d-- > 0;) {
        ++idx[d];
        off += stride_of_out[d];
        if (idx[d] < out_shape[d]) break;
        off -= idx[d] * stride_of_out[d];
        idx[d] = 0;
      }
    }
  }
  const auto& xv = x.node()->value;
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[(*src_index)[i]];
  return make_result<T>("permute", std::move(out_shape), std::move(out), {x.node()},
                        [src_index](detail::Node<T>& self) {
                          T* g = grad_of(self.inputs[0]);
                          if (!g) return;
                          for (std::size_t i = 0; i < src_index->size(); ++i)
                            g[(*src_index)[i]] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::ptrdiff_t axis0, std::ptrdiff_t axis1) {
  const std::size_t a0 = normalize_axis(axis0, x.rank());
  const std::size_t a1 = normalize_axis(axis1, x.rank());
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[a0], axes[a1]);
  return permute(x, axes);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return make_result<T>("reshape", std::move(shape), x.node()->value, {x.node()}, [](detail::Node<T>& self) {
    T* g = grad_of(self.inputs[0]);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

// ---- softmax / layer norm -------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::ptrdiff_t axis_in, const Mask* mask) {
  const Shape& s = x.shape();
  const std::size_t axis = normalize_axis(axis_in, s.size());
  const std::size_t len = s[axis];
  const std::size_t outer = shape_numel(Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(axis)));
  const std::size_t inner = shape_numel(Shape(s.begin() + static_cast<std::ptrdiff_t>(axis) + 1, s.end()));
  if (mask && !is_suffix(mask->shape, s)) {
    throw DimensionError("softmax: mask shape " + shape_str(mask->shape) + " does not broadcast to " +
                         shape_str(s));
  }
  const std::size_t mask_n = mask ? mask->allowed.size() : 1;
  auto allowed = [&](std::size_t flat) { return !mask || mask->allowed[flat % mask_n] != 0; };
  const auto& xv = x.node()->value;
  std::vector<T> out(xv.size(), T(0));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      bool any = false;
      T mx = T(0);
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t f = base + l * inner;
        if (!allowed(f)) continue;
        mx = any ? std::max(mx, xv[f]) : xv[f];
        any = true;
      }
      if (!any) throw DegenerateMaskError("softmax: every entry of a normalization slice is masked");
      T total = T(0);
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t f = base + l * inner;
        if (!allowed(f)) continue;
        out[f] = std::exp(xv[f] - mx);
        total += out[f];
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  return make_result<T>("softmax", s, std::move(out), {x.node()}, [outer, len, inner](detail::Node<T>& self) {
    T* g = grad_of(self.inputs[0]);
    if (!g) return;
    const auto& y = self.value;
    const auto& gy = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        T dot = T(0);
        for (std::size_t l = 0; l < len; ++l) dot += y[base + l * inner] * gy[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t f = base + l * inner;
          g[f] += y[f] * (gy[f] - dot);
        }
      }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("layer_norm on a scalar");
  const std::size_t d = s.back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma/beta must have shape (" + std::to_string(d) + ")");
  }
  const std::size_t rows = x.numel() / d;
  const auto& xv = x.node()->value;
  const auto& gv = gamma.node()->value;
  const auto& bv = beta.node()->value;
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return make_result<T>("layer_norm", s, std::move(out), {x.node(), gamma.node(), beta.node()},
                        [xhat, inv_std, rows, d](detail::Node<T>& self) {
                          T* gx = grad_of(self.inputs[0]);
                          T* gg = grad_of(self.inputs[1]);
                          T* gb = grad_of(self.inputs[2]);
                          const auto& gamma_v = self.inputs[1]->value;
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* dy = self.grad.data() + r * d;
                            const T* h = xhat->data() + r * d;
                            if (gg || gb) {
                              for (std::size_t j = 0; j < d; ++j) {
                                if (gg) gg[j] += dy[j] * h[j];
                                if (gb) gb[j] += dy[j];
                              }
                            }
                            if (!gx) continue;
                            T mean_g = T(0), mean_gh = T(0);
                            for (std::size_t j = 0; j < d; ++j) {
                              const T gj = dy[j] * gamma_v[j];
                              mean_g += gj;
                              mean_gh += gj * h[j];
                            }
                            mean_g /= static_cast<T>(d);
                            mean_gh /= static_cast<T>(d);
                            for (std::size_t j = 0; j < d; ++j) {
                              const T gj = dy[j] * gamma_v[j];
                              gx[r * d + j] += (*inv_std)[r] * (gj - mean_g - h[j] * mean_gh);
                            }
                          }
                        });
}

// ---- instantiation --------------------------------------------------------

#define PEDINTENT_INSTANTIATE_TENSOR(T)                                                        \
  template class Tensor<T>;                                                                    \
  template class Tape<T>;                                                                      \
  template void backward<T>(const Tensor<T>&);                                                 \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                            \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                       \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                             \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                                \
  template Tensor<T> log<T>(const Tensor<T>&);                                                 \
  template Tensor<T> clamp<T>(const Tensor<T>&, T, T);                                         \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                \
  template Tensor<T> mean_over_axis<T>(const Tensor<T>&, std::ptrdiff_t);                      \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::ptrdiff_t);                 \
  template Tensor<T> slice<T>(const Tensor<T>&, std::ptrdiff_t, std::size_t, std::size_t);     \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<std::size_t>&);            \
  template Tensor<T> transpose<T>(const Tensor<T>&, std::ptrdiff_t, std::ptrdiff_t);           \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                      \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::ptrdiff_t, const Mask*);                \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);

PEDINTENT_INSTANTIATE_TENSOR(float)
PEDINTENT_INSTANTIATE_TENSOR(double)

}  // namespace pedintent
