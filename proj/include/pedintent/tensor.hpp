#pragma once

// Dense row-major tensors with define-by-run reverse-mode autodiff.
//
// A Tensor is a cheap handle onto a shared node. Ops executed while grad mode
// is enabled and with at least one tracked input record a node that links to
// its inputs; backward() walks those nodes in reverse creation order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pedintent {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first touched
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<T>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

std::uint64_t next_node_id();

}  // namespace detail

// Gradient recording is enabled by default; NoGradGuard disables it for the
// current thread for the lifetime of the guard.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Negative axes count from the end.
  std::size_t dim(std::ptrdiff_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  // Write access is only granted to leaves (parameters, inputs).
  std::span<T> mutable_data();
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  // Gradient accumulated by backward(); zeros if this tensor never received one.
  std::span<const T> grad() const;
  void zero_grad();

  std::uint64_t node_id() const;
  bool is_leaf() const;

  // Same values, no history, not tracked.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(numel());
    auto src = data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
    return Tensor<U>(shape(), std::move(out));
  }

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

// Boolean mask; true marks an allowed (kept) entry.
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> allowed;

  Mask() = default;
  Mask(Shape s, std::vector<std::uint8_t> a);
  bool at(std::size_t row, std::size_t col) const;
};

// The recorded operations reachable from a root, in creation order.
template <typename T>
class Tape {
 public:
  static Tape record(const Tensor<T>& root);

  std::size_t size() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }
  const std::vector<std::shared_ptr<detail::Node<T>>>& ops() const { return ops_; }

 private:
  std::vector<std::shared_ptr<detail::Node<T>>> ops_;
};

// Accumulates d(loss)/d(leaf) into every tracked leaf reachable from `loss`
// and releases the recorded graph.
template <typename T>
void backward(const Tensor<T>& loss);

// ---- operations -----------------------------------------------------------

// (..., m, k) x (..., k, n) -> (..., m, n); leading dims broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise binary ops. Shapes must match, or the smaller operand's shape
// must equal the trailing dims of the larger one (it is repeated over the
// leading dims).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> log(const Tensor<T>& x);
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
// Removes `axis`.
template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& x, std::ptrdiff_t axis);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::ptrdiff_t axis);
// Half-open [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::ptrdiff_t axis, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::ptrdiff_t axis0, std::ptrdiff_t axis1);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Max-subtracted softmax along `axis`. Masked entries come out exactly zero;
// the mask shape must equal the trailing dims of x.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::ptrdiff_t axis, const Mask* mask = nullptr);

// Normalizes over the last axis; gamma and beta have the last dim's length.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}

}  // namespace pedintent
