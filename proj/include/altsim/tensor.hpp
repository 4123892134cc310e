// SPDX-License-Identifier: Apache-2.0
//
// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same buffer, `clone()` makes
// a deep copy. Every op whose operand requires grad appends one entry to the
// calling thread's tape; `backward()` replays that tape in reverse.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "altsim/errors.hpp"

namespace altsim {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Row-major 2D literal, mostly for tests.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  /// Direct write access, for optimizers and data loading. Bypasses the tape.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Empty span when no gradient has reached this tensor.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  /// Same values, fresh untracked buffer.
  Tensor detach() const { return Tensor::from(shape(), {data().begin(), data().end()}); }
  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_tensor(std::shared_ptr<detail::Node> node);

  std::shared_ptr<detail::Node> node_;
};

/// Compressed sparse row matrix; the constant left operand of `spmm`.
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col_index;
  std::vector<double> values;

  std::size_t nonzeros() const { return values.size(); }
  /// Zero for entries outside the sparsity pattern.
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> to_dense() const;
};

// ---- primitive ops -------------------------------------------------------

enum class ElementwiseOp { Add, Sub, Hadamard, Sigmoid, Tanh };

Tensor elementwise(ElementwiseOp op, const Tensor& a);
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// Constant sparse [m x k] times dense [k x n].
Tensor spmm(std::shared_ptr<const CsrMatrix> lhs, const Tensor& x);
/// x: [n x k], bias: [k]. The only broadcasting op: bias is shared across rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Column-wise concatenation of same-height matrices.
Tensor hcat(std::span<const Tensor> parts);
Tensor scale(const Tensor& a, double factor);
/// Sum of all entries, shape {1}.
Tensor sum(const Tensor& a);
/// Euclidean norm of each row of an [n x k] matrix, shape {n}. The
/// subgradient at a zero row is taken as zero.
Tensor row_norms(const Tensor& a);

/// Untracked copy of columns [begin, begin + count).
Tensor slice_columns(const Tensor& a, std::size_t begin, std::size_t count);

bool all_finite(const Tensor& t);

// ---- tape ------------------------------------------------------------------

struct BackwardReport {
  std::size_t ops_visited = 0;
  /// Loss did not require grad: nothing was recorded, no grads were written.
  bool detached = false;
};

/// Ordered record of the ops executed on this thread since the last clear().
class Tape {
 public:
  using BackwardFn = std::function<void(const detail::Node& out)>;

  static Tape& current();

  void record(const char* op, const std::shared_ptr<detail::Node>& out, BackwardFn fn);
  std::size_t size() const noexcept { return entries_.size(); }
  void clear() noexcept { entries_.clear(); }
  BackwardReport backward(const Tensor& loss);

 private:
  struct Entry {
    const char* op;
    std::shared_ptr<detail::Node> out;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

/// Populate grads of every tracked ancestor of a scalar `loss` recorded on
/// the current thread's tape. Leaf grads accumulate across calls.
BackwardReport backward(const Tensor& loss);

/// Suspends tape recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

/// Central differences (f(p+eps) - f(p-eps)) / (2 eps), one entry at a time.
/// Parameters are restored bit-exactly afterwards. Runs without recording.
std::vector<Tensor> finite_diff_grad(const std::function<double()>& f,
                                     std::span<Tensor> params, double eps);

namespace debug {
/// Scales the upstream gradient of every `op` entry during backward by
/// `factor`. Used to prove the gradient checker catches broken rules.
void inject_backward_fault(std::string op, double factor = 1.5);
void clear_backward_fault();
/// Names under which the differentiable primitives appear on the tape.
std::vector<std::string> recorded_op_names();
}  // namespace debug

}  // namespace altsim
