// Copyright 2026 The FVQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fvq/tensor.h"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

namespace fvq {

using detail::TensorImpl;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ConstStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MutStrided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> values) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  assert(shape_numel(impl->shape) == impl->values.size());
  return impl;
}

#ifndef NDEBUG
void check_finite(const TensorImpl& t, const char* tag) {
  for (double v : t.values) {
    if (!std::isfinite(v)) {
      throw std::domain_error(std::string("non-finite value produced by ") + tag);
    }
  }
}
#else
void check_finite(const TensorImpl&, const char*) {}
#endif

// Wraps `out` into a Tensor, appending a node when gradients are needed.
Tensor record(const char* tag, std::initializer_list<const Tensor*> inputs,
              std::shared_ptr<TensorImpl> out, std::function<void()> backward) {
  bool needs_grad = false;
  for (const Tensor* in : inputs) needs_grad = needs_grad || in->requires_grad();
  if (!g_grad_enabled || !needs_grad) return Tensor(std::move(out));
  ComputationRecord::Node node;
  node.tag = tag;
  auto& rec = ComputationRecord::active();
  for (const Tensor* in : inputs) {
    node.input_ids.push_back(in->node_id());
    if (in->is_leaf() && in->requires_grad()) rec.note_leaf(in->impl());
  }
  out->requires_grad = true;
  node.output = out;
  node.backward = std::move(backward);
  out->node_id = rec.append(std::move(node));
  return Tensor(std::move(out));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Shape of a broadcast binary op; the smaller operand repeats with period
// numel(smaller).
Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_suffix(b.shape(), a.shape())) return a.shape();
  if (is_suffix(a.shape(), b.shape())) return b.shape();
  throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                   shape_to_string(b.shape()) + " are not trailing-broadcastable");
}

void accumulate_broadcast(TensorImpl& target, std::span<const double> grad) {
  auto& g = target.ensure_grad();
  const std::size_t period = g.size();
  for (std::size_t i = 0; i < grad.size(); ++i) g[i % period] += grad[i];
}

template <typename Forward, typename BackA, typename BackB>
Tensor binary(const char* tag, const Tensor& a, const Tensor& b, Forward fwd, BackA da,
              BackB db) {
  require_defined(a, tag);
  require_defined(b, tag);
  Shape shape = broadcast_shape(a, b, tag);
  const std::size_t n = shape_numel(shape);
  const auto& av = a.impl()->values;
  const auto& bv = b.impl()->values;
  const std::size_t na = av.size(), nb = bv.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i % na], bv[i % nb]);
  auto impl = make_impl(std::move(shape), std::move(out));
  check_finite(*impl, tag);
  auto ai = a.impl(), bi = b.impl();
  TensorImpl* o = impl.get();
  return record(tag, {&a, &b}, impl, [ai, bi, o, da, db]() {
    if (o->grad.empty()) return;
    const std::size_t n = o->grad.size();
    const std::size_t na = ai->values.size(), nb = bi->values.size();
    std::vector<double> tmp(n);
    if (ai->requires_grad) {
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = da(ai->values[i % na], bi->values[i % nb], o->values[i], o->grad[i]);
      accumulate_broadcast(*ai, tmp);
    }
    if (bi->requires_grad) {
      for (std::size_t i = 0; i < n; ++i)
        tmp[i] = db(ai->values[i % na], bi->values[i % nb], o->values[i], o->grad[i]);
      accumulate_broadcast(*bi, tmp);
    }
  });
}

template <typename Forward, typename Back>
Tensor unary(const char* tag, const Tensor& a, Forward fwd, Back back) {
  require_defined(a, tag);
  const auto& av = a.impl()->values;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  auto impl = make_impl(a.shape(), std::move(out));
  check_finite(*impl, tag);
  auto ai = a.impl();
  TensorImpl* o = impl.get();
  return record(tag, {&a}, impl, [ai, o, back]() {
    if (o->grad.empty() || !ai->requires_grad) return;
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += back(ai->values[i], o->values[i], o->grad[i]);
  });
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<std::size_t>());
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  auto impl = make_impl(std::move(shape), std::vector<double>(n, value));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = make_impl(std::move(shape), std::move(values));
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return impl_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw ShapeError("at(r, c) on non-matrix " + shape_to_string(shape()));
  if (r >= dim(0) || c >= dim(1)) throw IndexError("at(r, c) out of range");
  return impl_->values[r * dim(1) + c];
}

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw GradError("set_requires_grad on a non-leaf tensor");
  impl_->requires_grad = on;
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto impl = make_impl(impl_->shape, impl_->values);
  impl->requires_grad = impl_->requires_grad && impl_->node_id < 0;
  return Tensor(std::move(impl));
}

// ---------------------------------------------------- ComputationRecord

ComputationRecord& ComputationRecord::active() {
  thread_local ComputationRecord record;
  return record;
}

void ComputationRecord::reset() {
  nodes_.clear();
  leaves_.clear();
  leaf_set_.clear();
  consumed_ = false;
}

void ComputationRecord::note_leaf(const std::shared_ptr<detail::TensorImpl>& leaf) {
  if (leaf_set_.insert(leaf.get()).second) leaves_.push_back(leaf);
}

std::int64_t ComputationRecord::append(Node node) {
  // Inputs always precede their consumer: leaves carry id -1, produced
  // tensors the index of an earlier node.
  for (std::int64_t id : node.input_ids) {
    assert(id < static_cast<std::int64_t>(nodes_.size()));
    (void)id;
  }
  nodes_.push_back(std::move(node));
  return static_cast<std::int64_t>(nodes_.size() - 1);
}

void ComputationRecord::run_backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw GradError("backward requires a scalar loss, got shape " +
                    shape_to_string(loss.shape()));
  }
  if (consumed_) {
    throw GradError("backward called twice on the same computation record; call reset() first");
  }
  if (loss.requires_grad()) {
    loss.impl()->ensure_grad()[0] += 1.0;
    const std::int64_t last = loss.is_leaf() ? -1 : loss.node_id();
    for (std::int64_t i = last; i >= 0; --i) nodes_[static_cast<std::size_t>(i)].backward();
  }
  for (auto& leaf : leaves_) leaf->ensure_grad();
  consumed_ = true;
}

void backward(const Tensor& loss) { ComputationRecord::active().run_backward(loss); }

void reset_record() { ComputationRecord::active().reset(); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------- StopGradientMemo

StopGradientMemo& StopGradientMemo::active() {
  thread_local StopGradientMemo memo;
  return memo;
}

void StopGradientMemo::start_recording() {
  mode_ = Mode::kRecord;
  values_.clear();
  indices_.clear();
  value_cursor_ = index_cursor_ = 0;
}

void StopGradientMemo::start_replay() {
  mode_ = Mode::kReplay;
  value_cursor_ = index_cursor_ = 0;
}

void StopGradientMemo::stop() { mode_ = Mode::kOff; }

std::vector<double> StopGradientMemo::values(std::vector<double> computed) {
  switch (mode_) {
    case Mode::kOff:
      return computed;
    case Mode::kRecord:
      values_.push_back(computed);
      return computed;
    case Mode::kReplay:
      if (value_cursor_ >= values_.size() || values_[value_cursor_].size() != computed.size()) {
        throw std::logic_error("stop-gradient replay diverged from the recorded evaluation");
      }
      return values_[value_cursor_++];
  }
  return computed;
}

std::vector<std::int32_t> StopGradientMemo::indices(std::vector<std::int32_t> computed) {
  switch (mode_) {
    case Mode::kOff:
      return computed;
    case Mode::kRecord:
      indices_.push_back(computed);
      return computed;
    case Mode::kReplay:
      if (index_cursor_ >= indices_.size() || indices_[index_cursor_].size() != computed.size()) {
        throw std::logic_error("stop-gradient replay diverged from the recorded evaluation");
      }
      return indices_[index_cursor_++];
  }
  return computed;
}

// ----------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double, double g) { return g; },
      [](double, double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double, double g) { return g; },
      [](double, double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double, double g) { return g * y; },
      [](double x, double, double, double g) { return g * x; });
}

Tensor add(const Tensor& a, double b) {
  return unary(
      "add_scalar", a, [b](double x) { return x + b; },
      [](double, double, double g) { return g; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double, double g) { return g * factor; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; },
      [](double x, double, double g) { return 2.0 * x * g; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y, double g) { return g / (2.0 * y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y, double g) { return g * y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double, double g) { return g / x; });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
      [](double x, double, double g) {
        const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
        const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        return g * (0.5 * (1.0 + t) + 0.5 * x * dt);
      });
}

// ---------------------------------------------------------------- matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                     shape_to_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  auto impl = make_impl({a.dim(0), b.dim(1)}, std::move(out));
  check_finite(*impl, "matmul");
  auto ai = a.impl(), bi = b.impl();
  TensorImpl* o = impl.get();
  return record("matmul", {&a, &b}, impl, [ai, bi, o, m, k, n]() {
    if (o->grad.empty()) return;
    ConstMap g(o->grad.data(), m, n);
    if (ai->requires_grad) {
      MutMap(ai->ensure_grad().data(), m, k).noalias() +=
          g * ConstMap(bi->values.data(), k, n).transpose();
    }
    if (bi->requires_grad) {
      MutMap(bi->ensure_grad().data(), k, n).noalias() +=
          ConstMap(ai->values.data(), m, k).transpose() * g;
    }
  });
}

// ------------------------------------------------------------ reductions

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.values()) total += v;
  auto impl = make_impl({}, {total});
  auto ai = a.impl();
  TensorImpl* o = impl.get();
  return record("sum", {&a}, impl, [ai, o]() {
    if (o->grad.empty() || !ai->requires_grad) return;
    auto& g = ai->ensure_grad();
    for (double& x : g) x += o->grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  require_defined(a, "sum");
  if (axis >= a.rank()) {
    throw IndexError("sum: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_to_string(a.shape()));
  }
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  std::vector<double> out(outer * inner, 0.0);
  const auto& av = a.impl()->values;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += av[(o * len + l) * inner + i];
  auto impl = make_impl(std::move(out_shape), std::move(out));
  auto ai = a.impl();
  TensorImpl* op = impl.get();
  return record("sum_axis", {&a}, impl, [ai, op, outer, inner, len]() {
    if (op->grad.empty() || !ai->requires_grad) return;
    auto& g = ai->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i) g[(o * len + l) * inner + i] += op->grad[o * inner + i];
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  Tensor s = sum(a, axis);
  return scale(s, 1.0 / static_cast<double>(a.dim(axis)));
}

// --------------------------------------------------------- restructuring

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                     shape_to_string(shape));
  }
  auto impl = make_impl(std::move(shape), a.impl()->values);
  auto ai = a.impl();
  TensorImpl* o = impl.get();
  return record("reshape", {&a}, impl, [ai, o]() {
    if (o->grad.empty() || !ai->requires_grad) return;
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> indices) {
  require_defined(table, "gather_rows");
  if (table.rank() != 2) {
    throw ShapeError("gather_rows: table must be a matrix, got " + shape_to_string(table.shape()));
  }
  const std::size_t rows = table.dim(0), width = table.dim(1);
  std::vector<double> out(indices.size() * width);
  const auto& tv = table.impl()->values;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::int32_t r = indices[i];
    if (r < 0 || static_cast<std::size_t>(r) >= rows) {
      throw IndexError("gather_rows: index " + std::to_string(r) + " outside [0, " +
                       std::to_string(rows) + ")");
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(r * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  auto impl = make_impl({indices.size(), width}, std::move(out));
  auto ti = table.impl();
  TensorImpl* o = impl.get();
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  return record("gather_rows", {&table}, impl, [ti, o, idx = std::move(idx), width]() {
    if (o->grad.empty() || !ti->requires_grad) return;
    auto& g = ti->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t r = static_cast<std::size_t>(idx[i]);
      for (std::size_t c = 0; c < width; ++c) g[r * width + c] += o->grad[i * width + c];
    }
  });
}

Tensor take(const Tensor& a, std::span<const std::size_t> source, Shape shape) {
  require_defined(a, "take");
  if (shape_numel(shape) != source.size()) {
    throw ShapeError("take: " + std::to_string(source.size()) + " sources for shape " +
                     shape_to_string(shape));
  }
  const auto& av = a.impl()->values;
  std::vector<double> out(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] >= av.size()) throw IndexError("take: source index out of range");
    out[i] = av[source[i]];
  }
  auto impl = make_impl(std::move(shape), std::move(out));
  auto ai = a.impl();
  TensorImpl* o = impl.get();
  std::vector<std::size_t> src(source.begin(), source.end());
  return record("take", {&a}, impl, [ai, o, src = std::move(src)]() {
    if (o->grad.empty() || !ai->requires_grad) return;
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += o->grad[i];
  });
}

Tensor detach(const Tensor& a) {
  require_defined(a, "detach");
  auto values = StopGradientMemo::active().values(a.impl()->values);
  return Tensor(make_impl(a.shape(), std::move(values)));
}

Tensor straight_through(const Tensor& a, const Tensor& forward_values) {
  require_defined(a, "straight_through");
  require_defined(forward_values, "straight_through");
  if (a.shape() != forward_values.shape()) {
    throw ShapeError("straight_through: shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(forward_values.shape()) + " differ");
  }
  const auto& av = a.impl()->values;
  const auto& fv = forward_values.impl()->values;
  std::vector<double> out;
  auto& memo = StopGradientMemo::active();
  if (memo.mode() == StopGradientMemo::Mode::kOff) {
    out = fv;
  } else {
    std::vector<double> offset(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) offset[i] = fv[i] - av[i];
    const bool replay = memo.mode() == StopGradientMemo::Mode::kReplay;
    offset = memo.values(std::move(offset));
    if (replay) {
      out.resize(av.size());
      for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + offset[i];
    } else {
      out = fv;
    }
  }
  auto impl = make_impl(a.shape(), std::move(out));
  auto ai = a.impl();
  TensorImpl* o = impl.get();
  return record("straight_through", {&a}, impl, [ai, o]() {
    if (o->grad.empty() || !ai->requires_grad) return;
    auto& g = ai->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
  });
}

// ------------------------------------------------------- fused NN kernels

Tensor softmax(const Tensor& a) {
  require_defined(a, "softmax");
  if (a.rank() == 0) throw ShapeError("softmax of a rank-0 tensor");
  const std::size_t width = a.shape().back();
  const std::size_t rows = a.numel() / width;
  const auto& av = a.impl()->values;
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * width;
    double* y = out.data() + r * width;
    const double mx = *std::max_element(x, x + width);
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) z += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < width; ++c) y[c] /= z;
  }
  auto impl = make_impl(a.shape(), std::move(out));
  auto ai = a.impl();
  TensorImpl* o = impl.get();
  return record("softmax", {&a}, impl, [ai, o, rows, width]() {
    if (o->grad.empty() || !ai->requires_grad) return;
    auto& g = ai->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = o->values.data() + r * width;
      const double* gy = o->grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t c = 0; c < width; ++c) dot += gy[c] * y[c];
      for (std::size_t c = 0; c < width; ++c) g[r * width + c] += y[c] * (gy[c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double epsilon) {
  require_defined(x, "layer_norm");
  if (x.rank() == 0) throw ShapeError("layer_norm of a rank-0 tensor");
  const std::size_t width = x.shape().back();
  if (gain.shape() != Shape{width} || shift.shape() != Shape{width}) {
    throw ShapeError("layer_norm: gain/shift " + shape_to_string(gain.shape()) + "/" +
                     shape_to_string(shift.shape()) + " do not match input " +
                     shape_to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / width;
  const auto& xv = x.impl()->values;
  const auto& gv = gain.impl()->values;
  const auto& sv = shift.impl()->values;
  std::vector<double> out(xv.size()), xhat(xv.size()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * width;
    double mu = 0.0;
    for (std::size_t c = 0; c < width; ++c) mu += xr[c];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(width);
    rstd[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t c = 0; c < width; ++c) {
      const double h = (xr[c] - mu) * rstd[r];
      xhat[r * width + c] = h;
      out[r * width + c] = h * gv[c] + sv[c];
    }
  }
  auto impl = make_impl(x.shape(), std::move(out));
  check_finite(*impl, "layer_norm");
  auto xi = x.impl(), gi = gain.impl(), si = shift.impl();
  TensorImpl* o = impl.get();
  return record(
      "layer_norm", {&x, &gain, &shift}, impl,
      [xi, gi, si, o, xhat = std::move(xhat), rstd = std::move(rstd), rows, width]() {
        if (o->grad.empty()) return;
        const auto& gy = o->grad;
        if (gi->requires_grad) {
          auto& gg = gi->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < width; ++c)
              gg[c] += gy[r * width + c] * xhat[r * width + c];
        }
        if (si->requires_grad) {
          auto& gs = si->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < width; ++c) gs[c] += gy[r * width + c];
        }
        if (xi->requires_grad) {
          auto& gx = xi->ensure_grad();
          const double inv_w = 1.0 / static_cast<double>(width);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t c = 0; c < width; ++c) {
              const double dh = gy[r * width + c] * gi->values[c];
              m1 += dh;
              m2 += dh * xhat[r * width + c];
            }
            m1 *= inv_w;
            m2 *= inv_w;
            for (std::size_t c = 0; c < width; ++c) {
              const double dh = gy[r * width + c] * gi->values[c];
              gx[r * width + c] += rstd[r] * (dh - m1 - xhat[r * width + c] * m2);
            }
          }
        }
      });
}

namespace {

struct AttentionDims {
  std::size_t groups, seq, width, heads, head_dim;
};

AttentionDims attention_dims(const Tensor& q, const Tensor& k, std::size_t heads,
                             std::size_t seq_len) {
  if (q.rank() != 2 || q.shape() != k.shape()) {
    throw ShapeError("attention: q " + shape_to_string(q.shape()) + " and k " +
                     shape_to_string(k.shape()) + " must be equal matrices");
  }
  const std::size_t width = q.dim(1);
  if (heads == 0 || width % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (seq_len == 0 || q.dim(0) % seq_len != 0) {
    throw ShapeError("attention: " + std::to_string(q.dim(0)) + " rows not a multiple of seq_len " +
                     std::to_string(seq_len));
  }
  return {q.dim(0) / seq_len, seq_len, width, heads, width / heads};
}

// probs laid out [groups, heads, seq, seq].
std::vector<double> attention_probs(const std::vector<double>& qv, const std::vector<double>& kv,
                                    const AttentionDims& d) {
  const auto T = static_cast<Eigen::Index>(d.seq);
  const auto dh = static_cast<Eigen::Index>(d.head_dim);
  const auto stride = static_cast<Eigen::Index>(d.width);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
  std::vector<double> probs(d.groups * d.heads * d.seq * d.seq);
  for (std::size_t g = 0; g < d.groups; ++g) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      const std::size_t base = g * d.seq * d.width + h * d.head_dim;
      ConstStrided Q(qv.data() + base, T, dh, Eigen::OuterStride<>(stride));
      ConstStrided K(kv.data() + base, T, dh, Eigen::OuterStride<>(stride));
      MutMap P(probs.data() + (g * d.heads + h) * d.seq * d.seq, T, T);
      P.noalias() = (Q * K.transpose()) * scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        const double mx = P.row(i).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j < T; ++j) z += (P(i, j) = std::exp(P(i, j) - mx));
        for (Eigen::Index j = 0; j < T; ++j) P(i, j) /= z;
      }
    }
  }
  return probs;
}

}  // namespace

Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads,
                         std::size_t seq_len) {
  const AttentionDims d = attention_dims(q, k, heads, seq_len);
  return Tensor::from({d.groups, d.heads, d.seq, d.seq},
                      attention_probs(q.impl()->values, k.impl()->values, d));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 std::size_t seq_len) {
  require_defined(q, "attention");
  require_defined(k, "attention");
  require_defined(v, "attention");
  const AttentionDims d = attention_dims(q, k, heads, seq_len);
  if (v.shape() != q.shape()) {
    throw ShapeError("attention: v " + shape_to_string(v.shape()) + " must match q " +
                     shape_to_string(q.shape()));
  }
  std::vector<double> probs = attention_probs(q.impl()->values, k.impl()->values, d);
  const auto T = static_cast<Eigen::Index>(d.seq);
  const auto dh = static_cast<Eigen::Index>(d.head_dim);
  const auto stride = static_cast<Eigen::Index>(d.width);
  std::vector<double> out(q.numel(), 0.0);
  const auto& vv = v.impl()->values;
  for (std::size_t g = 0; g < d.groups; ++g) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      const std::size_t base = g * d.seq * d.width + h * d.head_dim;
      ConstMap P(probs.data() + (g * d.heads + h) * d.seq * d.seq, T, T);
      ConstStrided V(vv.data() + base, T, dh, Eigen::OuterStride<>(stride));
      MutStrided O(out.data() + base, T, dh, Eigen::OuterStride<>(stride));
      O.noalias() = P * V;
    }
  }
  auto impl = make_impl(q.shape(), std::move(out));
  check_finite(*impl, "attention");
  auto qi = q.impl(), ki = k.impl(), vi = v.impl();
  TensorImpl* o = impl.get();
  return record("attention", {&q, &k, &v}, impl,
                [qi, ki, vi, o, probs = std::move(probs), d, T, dh, stride]() {
                  if (o->grad.empty()) return;
                  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_dim));
                  RowMat dP(T, T), dS(T, T);
                  for (std::size_t g = 0; g < d.groups; ++g) {
                    for (std::size_t h = 0; h < d.heads; ++h) {
                      const std::size_t base = g * d.seq * d.width + h * d.head_dim;
                      ConstMap P(probs.data() + (g * d.heads + h) * d.seq * d.seq, T, T);
                      ConstStrided dO(o->grad.data() + base, T, dh, Eigen::OuterStride<>(stride));
                      ConstStrided Q(qi->values.data() + base, T, dh, Eigen::OuterStride<>(stride));
                      ConstStrided K(ki->values.data() + base, T, dh, Eigen::OuterStride<>(stride));
                      ConstStrided V(vi->values.data() + base, T, dh, Eigen::OuterStride<>(stride));
                      if (vi->requires_grad) {
                        MutStrided dV(vi->ensure_grad().data() + base, T, dh,
                                      Eigen::OuterStride<>(stride));
                        dV.noalias() += P.transpose() * dO;
                      }
                      if (!qi->requires_grad && !ki->requires_grad) continue;
                      dP.noalias() = dO * V.transpose();
                      for (Eigen::Index i = 0; i < T; ++i) {
                        const double dot = dP.row(i).dot(P.row(i));
                        for (Eigen::Index j = 0; j < T; ++j)
                          dS(i, j) = P(i, j) * (dP(i, j) - dot) * scale;
                      }
                      if (qi->requires_grad) {
                        MutStrided dQ(qi->ensure_grad().data() + base, T, dh,
                                      Eigen::OuterStride<>(stride));
                        dQ.noalias() += dS * K;
                      }
                      if (ki->requires_grad) {
                        MutStrided dK(ki->ensure_grad().data() + base, T, dh,
                                      Eigen::OuterStride<>(stride));
                        dK.noalias() += dS.transpose() * Q;
                      }
                    }
                  }
                });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse: shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
  return mean(square(sub(a, b)));
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// ------------------------------------------------------ gradient checking

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps) {
  Tensor leaf = Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()),
                             /*requires_grad=*/true);
  std::vector<Tensor> inputs{leaf};
  return finite_diff_check([&]() { return f(leaf); }, inputs, eps);
}

double finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> inputs,
                         double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  auto& memo = StopGradientMemo::active();
  for (Tensor& t : inputs) t.zero_grad();

  reset_record();
  memo.start_recording();
  Tensor loss;
  try {
    loss = f();
  } catch (...) {
    memo.stop();
    throw;
  }
  memo.stop();
  backward(loss);
  reset_record();

  std::vector<std::vector<double>> analytic;
  for (Tensor& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }

  auto evaluate = [&]() {
    NoGradGuard guard;
    memo.start_replay();
    double value = 0.0;
    try {
      value = f().item();
    } catch (...) {
      memo.stop();
      throw;
    }
    memo.stop();
    return value;
  };

  double worst = 0.0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + eps;
      const double up = evaluate();
      values[i] = original - eps;
      const double down = evaluate();
      values[i] = original;
      const double fd = (up - down) / (2.0 * eps);
      const double g = analytic[t][i];
      const double denom = std::max({std::abs(g), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(g - fd) / denom);
    }
  }
  return worst;
}

}  // namespace fvq
