// SPDX-License-Identifier: Apache-2.0

#include "altsim/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace altsim {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Tensor make_tensor(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

thread_local bool g_recording = true;
thread_local Tape g_tape;

std::string g_fault_op;
double g_fault_factor = 1.0;

NodePtr new_node(Shape shape, std::vector<double> value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

const Node& checked(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor operand");
  return *t.node();
}

bool tracks(std::initializer_list<const Tensor*> operands) {
  if (!g_recording) return false;
  return std::any_of(operands.begin(), operands.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

void accumulate(const NodePtr& target, std::span<const double> g, double factor = 1.0) {
  if (!target->requires_grad) return;
  target->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) target->grad[i] += factor * g[i];
}

double logistic(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

static void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  validate_shape(shape);
  const auto n = shape_size(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  validate_shape(shape);
  if (shape_size(shape) != values.size())
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(shape));
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    v.insert(v.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return checked(*this, "shape").shape; }
std::size_t Tensor::size() const { return checked(*this, "size").value.size(); }

std::size_t Tensor::rows() const { return shape().front(); }

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.size() >= 2 ? s[1] : 1;
}

std::span<const double> Tensor::data() const { return checked(*this, "data").value; }
std::span<double> Tensor::mutable_data() {
  checked(*this, "mutable_data");
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2 || r >= rows() || c >= cols())
    throw IndexError("index (" + std::to_string(r) + "," + std::to_string(c) + ") outside " +
                     shape_string(shape()));
  return node_->value[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool on) {
  checked(*this, "set_requires_grad");
  node_->requires_grad = on;
}
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return checked(*this, "grad").grad; }

std::span<double> Tensor::mutable_grad() {
  checked(*this, "mutable_grad");
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::clone() const {
  const auto& n = checked(*this, "clone");
  auto copy = new_node(n.shape, n.value, n.requires_grad);
  copy->grad = n.grad;
  return Tensor(copy);
}

// ---- CsrMatrix ---------------------------------------------------------------

double CsrMatrix::at(std::size_t r, std::size_t c) const {
  if (r >= rows || c >= cols) throw IndexError("CSR index out of range");
  for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
    if (col_index[k] == c) return values[k];
  return 0.0;
}

std::vector<double> CsrMatrix::to_dense() const {
  std::vector<double> dense(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k) dense[r * cols + col_index[k]] = values[k];
  return dense;
}

// ---- elementwise -------------------------------------------------------------

Tensor elementwise(ElementwiseOp op, const Tensor& a) {
  checked(a, "elementwise");
  const auto in = a.data();
  std::vector<double> out(in.size());
  switch (op) {
    case ElementwiseOp::Sigmoid:
      std::transform(in.begin(), in.end(), out.begin(), logistic);
      break;
    case ElementwiseOp::Tanh:
      std::transform(in.begin(), in.end(), out.begin(), [](double x) { return std::tanh(x); });
      break;
    default:
      throw ContractError("elementwise: binary op called with one operand");
  }
  const bool track = tracks({&a});
  auto node = new_node(a.shape(), std::move(out), track);
  if (track) {
    NodePtr pa = a.node();
    const bool is_sigmoid = op == ElementwiseOp::Sigmoid;
    Tape::current().record(is_sigmoid ? "sigmoid" : "tanh", node, [pa, is_sigmoid](const Node& o) {
      if (!pa->requires_grad) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < o.value.size(); ++i) {
        const double y = o.value[i];
        const double d = is_sigmoid ? y * (1.0 - y) : 1.0 - y * y;
        pa->grad[i] += o.grad[i] * d;
      }
    });
  }
  return make_tensor(node);
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  checked(a, "elementwise");
  checked(b, "elementwise");
  const char* name = op == ElementwiseOp::Add   ? "add"
                     : op == ElementwiseOp::Sub ? "sub"
                     : op == ElementwiseOp::Hadamard
                         ? "hadamard"
                         : nullptr;
  if (!name) throw ContractError("elementwise: unary op called with two operands");
  require_same_shape(a, b, name);

  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (op) {
      case ElementwiseOp::Add: out[i] = x[i] + y[i]; break;
      case ElementwiseOp::Sub: out[i] = x[i] - y[i]; break;
      default: out[i] = x[i] * y[i]; break;
    }
  }
  const bool track = tracks({&a, &b});
  auto node = new_node(a.shape(), std::move(out), track);
  if (track) {
    NodePtr pa = a.node(), pb = b.node();
    Tape::current().record(name, node, [pa, pb, op](const Node& o) {
      switch (op) {
        case ElementwiseOp::Add:
          accumulate(pa, o.grad);
          accumulate(pb, o.grad);
          break;
        case ElementwiseOp::Sub:
          accumulate(pa, o.grad);
          accumulate(pb, o.grad, -1.0);
          break;
        default:
          if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i] * pb->value[i];
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] += o.grad[i] * pa->value[i];
          }
      }
    });
  }
  return make_tensor(node);
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Sub, a, b); }
Tensor hadamard(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::Hadamard, a, b); }
Tensor sigmoid(const Tensor& a) { return elementwise(ElementwiseOp::Sigmoid, a); }
Tensor tanh(const Tensor& a) { return elementwise(ElementwiseOp::Tanh, a); }

// ---- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  checked(a, "matmul");
  checked(b, "matmul");
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner extents disagree, " + shape_string(a.shape()) + " . " +
                         shape_string(b.shape()));

  std::vector<double> out(m * n);
  Map(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);

  const bool track = tracks({&a, &b});
  auto node = new_node({m, n}, std::move(out), track);
  if (track) {
    NodePtr pa = a.node(), pb = b.node();
    Tape::current().record("matmul", node, [pa, pb, m, k, n](const Node& o) {
      ConstMap g(o.grad.data(), m, n);
      if (pa->requires_grad) {
        pa->ensure_grad();
        Map(pa->grad.data(), m, k).noalias() += g * ConstMap(pb->value.data(), k, n).transpose();
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        Map(pb->grad.data(), k, n).noalias() += ConstMap(pa->value.data(), m, k).transpose() * g;
      }
    });
  }
  return make_tensor(node);
}

Tensor spmm(std::shared_ptr<const CsrMatrix> lhs, const Tensor& x) {
  checked(x, "spmm");
  if (!lhs) throw ContractError("spmm: null sparse operand");
  require_matrix(x, "spmm");
  if (x.rows() != lhs->cols)
    throw DimensionError("spmm: sparse [" + std::to_string(lhs->rows) + "x" +
                         std::to_string(lhs->cols) + "] times " + shape_string(x.shape()));
  const auto n = x.cols();
  const auto in = x.data();
  std::vector<double> out(lhs->rows * n, 0.0);
  for (std::size_t r = 0; r < lhs->rows; ++r) {
    double* dst = out.data() + r * n;
    for (auto k = lhs->row_ptr[r]; k < lhs->row_ptr[r + 1]; ++k) {
      const double w = lhs->values[k];
      const double* src = in.data() + lhs->col_index[k] * n;
      for (std::size_t c = 0; c < n; ++c) dst[c] += w * src[c];
    }
  }
  const bool track = tracks({&x});
  auto node = new_node({lhs->rows, n}, std::move(out), track);
  if (track) {
    NodePtr px = x.node();
    Tape::current().record("spmm", node, [px, lhs, n](const Node& o) {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::size_t r = 0; r < lhs->rows; ++r) {
        const double* g = o.grad.data() + r * n;
        for (auto k = lhs->row_ptr[r]; k < lhs->row_ptr[r + 1]; ++k) {
          const double w = lhs->values[k];
          double* dst = px->grad.data() + lhs->col_index[k] * n;
          for (std::size_t c = 0; c < n; ++c) dst[c] += w * g[c];
        }
      }
    });
  }
  return make_tensor(node);
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  checked(x, "add_bias");
  checked(bias, "add_bias");
  require_matrix(x, "add_bias");
  const auto m = x.rows(), n = x.cols();
  if (bias.size() != n || bias.rank() != 1)
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  const auto in = x.data();
  const auto b = bias.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = in[r * n + c] + b[c];

  const bool track = tracks({&x, &bias});
  auto node = new_node(x.shape(), std::move(out), track);
  if (track) {
    NodePtr px = x.node(), pb = bias.node();
    Tape::current().record("add_bias", node, [px, pb, m, n](const Node& o) {
      accumulate(px, o.grad);
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) pb->grad[c] += o.grad[r * n + c];
      }
    });
  }
  return make_tensor(node);
}

Tensor hcat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("hcat: no operands");
  const auto m = checked(parts.front(), "hcat").shape.front();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_matrix(p, "hcat");
    if (p.rows() != m)
      throw DimensionError("hcat: row counts disagree, " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto src = parts[i].data();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(src.data() + r * widths[i], widths[i], out.data() + r * total + offset);
    offset += widths[i];
  }

  bool track = false;
  if (g_recording)
    for (const auto& p : parts) track = track || p.requires_grad();
  auto node = new_node({m, total}, std::move(out), track);
  if (track) {
    std::vector<NodePtr> inputs;
    for (const auto& p : parts) inputs.push_back(p.node());
    Tape::current().record("hcat", node, [inputs, widths, m, total](const Node& o) {
      std::size_t off = 0;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto& in = inputs[i];
        if (in->requires_grad) {
          in->ensure_grad();
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < widths[i]; ++c)
              in->grad[r * widths[i] + c] += o.grad[r * total + off + c];
        }
        off += widths[i];
      }
    });
  }
  return make_tensor(node);
}

Tensor scale(const Tensor& a, double factor) {
  checked(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  const bool track = tracks({&a});
  auto node = new_node(a.shape(), std::move(out), track);
  if (track) {
    NodePtr pa = a.node();
    Tape::current().record("scale", node, [pa, factor](const Node& o) { accumulate(pa, o.grad, factor); });
  }
  return make_tensor(node);
}

Tensor sum(const Tensor& a) {
  checked(a, "sum");
  double total = 0.0;
  for (double v : a.data()) total += v;
  const bool track = tracks({&a});
  auto node = new_node({1}, {total}, track);
  if (track) {
    NodePtr pa = a.node();
    Tape::current().record("sum", node, [pa](const Node& o) {
      if (!pa->requires_grad) return;
      pa->ensure_grad();
      for (auto& g : pa->grad) g += o.grad[0];
    });
  }
  return make_tensor(node);
}

Tensor row_norms(const Tensor& a) {
  checked(a, "row_norms");
  require_matrix(a, "row_norms");
  const auto m = a.rows(), n = a.cols();
  const auto in = a.data();
  std::vector<double> out(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += in[r * n + c] * in[r * n + c];
    out[r] = std::sqrt(s);
  }
  const bool track = tracks({&a});
  auto node = new_node({m}, std::move(out), track);
  if (track) {
    NodePtr pa = a.node();
    Tape::current().record("row_norms", node, [pa, m, n](const Node& o) {
      if (!pa->requires_grad) return;
      pa->ensure_grad();
      for (std::size_t r = 0; r < m; ++r) {
        const double norm = o.value[r];
        if (norm == 0.0) continue;
        const double k = o.grad[r] / norm;
        for (std::size_t c = 0; c < n; ++c) pa->grad[r * n + c] += k * pa->value[r * n + c];
      }
    });
  }
  return make_tensor(node);
}

Tensor slice_columns(const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_columns");
  if (count == 0 || begin + count > a.cols())
    throw IndexError("slice_columns: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + shape_string(a.shape()));
  const auto m = a.rows(), n = a.cols();
  std::vector<double> out(m * count);
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(a.data().data() + r * n + begin, count, out.data() + r * count);
  return Tensor::from({m, count}, std::move(out));
}

bool all_finite(const Tensor& t) {
  const auto d = t.data();
  return std::all_of(d.begin(), d.end(), [](double v) { return std::isfinite(v); });
}

// ---- tape ------------------------------------------------------------------

Tape& Tape::current() { return g_tape; }

void Tape::record(const char* op, const std::shared_ptr<detail::Node>& out, BackwardFn fn) {
  entries_.push_back({op, out, std::move(fn)});
}

BackwardReport Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  BackwardReport report;
  if (!loss.requires_grad()) {
    report.detached = true;
    return report;
  }
  // Intermediate grads are per-pass; only leaves accumulate across passes.
  for (auto& e : entries_) e.out->grad.clear();
  auto& root = *loss.node();
  root.ensure_grad();
  root.grad[0] += 1.0;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->out->grad.empty()) continue;
    if (!g_fault_op.empty() && g_fault_op == it->op)
      for (auto& g : it->out->grad) g *= g_fault_factor;
    it->fn(*it->out);
    ++report.ops_visited;
  }
  return report;
}

BackwardReport backward(const Tensor& loss) { return Tape::current().backward(loss); }

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool grad_recording_enabled() { return g_recording; }

std::vector<Tensor> finite_diff_grad(const std::function<double()>& f, std::span<Tensor> params,
                                     double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_grad: eps must be positive");
  NoGradGuard no_grad;
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (auto& p : params) {
    auto values = p.mutable_data();
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double up = f();
      values[i] = original - eps;
      const double down = f();
      values[i] = original;
      g[i] = (up - down) / (2.0 * eps);
    }
    grads.push_back(Tensor::from(p.shape(), std::move(g)));
  }
  return grads;
}

namespace debug {
void inject_backward_fault(std::string op, double factor) {
  g_fault_op = std::move(op);
  g_fault_factor = factor;
}
void clear_backward_fault() {
  g_fault_op.clear();
  g_fault_factor = 1.0;
}
std::vector<std::string> recorded_op_names() {
  return {"matmul", "spmm", "add_bias", "hcat", "scale", "sum", "row_norms",
          "sigmoid", "tanh", "add", "sub", "hadamard"};
}
}  // namespace debug

}  // namespace altsim
