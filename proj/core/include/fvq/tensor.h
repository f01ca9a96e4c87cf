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

#ifndef FVQ_TENSOR_H_
#define FVQ_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace fvq {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Violations of the backward() contract (non-scalar loss, double backward).
class GradError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until something flows back
  bool requires_grad = false;
  std::int64_t node_id = -1;  // -1 for leaves and constants

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Tensor is a shared handle: copies alias the same storage, which is how
/// layers and optimizers share parameters. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->values.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const { return impl_->values; }
  // In-place writes bypass the computation record; meant for optimizers and
  // initializers only.
  std::span<double> mutable_values() { return impl_->values; }

  double item() const;
  double at(std::size_t i) const { return impl_->values.at(i); }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  // Empty span when no gradient has been deposited.
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad();

  std::int64_t node_id() const { return impl_->node_id; }
  bool is_leaf() const { return impl_->node_id < 0; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  Tensor clone() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Append-only tape of differentiable operations for the calling thread.
///
/// Every operation whose inputs require gradients appends one node; a node's
/// inputs were produced by earlier nodes (or are leaves). backward() walks the
/// nodes in strict reverse append order and then marks the record consumed;
/// a second backward() throws GradError until reset() is called.
class ComputationRecord {
 public:
  struct Node {
    std::string tag;
    std::vector<std::int64_t> input_ids;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void()> backward;
  };

  static ComputationRecord& active();

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  const Node& node(std::size_t i) const { return nodes_.at(i); }

  // Drops all nodes (and the intermediates they keep alive).
  void reset();

  std::int64_t append(Node node);
  void note_leaf(const std::shared_ptr<detail::TensorImpl>& leaf);
  void run_backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<detail::TensorImpl>> leaves_;
  std::unordered_set<const detail::TensorImpl*> leaf_set_;
  bool consumed_ = false;
};

void backward(const Tensor& loss);

// Shorthand for ComputationRecord::active().reset().
void reset_record();

/// While alive, operations on this thread are not recorded.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Holds the values hidden behind stop-gradients (detach, straight-through
/// offsets, argmin indices) fixed across repeated evaluations of a function.
///
/// In record mode each stop-gradient site stores what it produced; in replay
/// mode the same sites, visited in the same order, return the stored values.
/// finite_diff_check uses this so that the numerical derivative is taken of
/// the same function autodiff differentiates, where sg[.] is a constant.
class StopGradientMemo {
 public:
  enum class Mode { kOff, kRecord, kReplay };

  static StopGradientMemo& active();

  Mode mode() const { return mode_; }
  void start_recording();
  void start_replay();  // rewinds the cursors
  void stop();

  std::vector<double> values(std::vector<double> computed);
  std::vector<std::int32_t> indices(std::vector<std::int32_t> computed);

 private:
  Mode mode_ = Mode::kOff;
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<std::int32_t>> indices_;
  std::size_t value_cursor_ = 0;
  std::size_t index_cursor_ = 0;
};

// Elementwise. The smaller operand's shape must equal the larger's or be a
// trailing suffix of it; it is then repeated over the leading dimensions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor scale(const Tensor& a, double factor);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation

Tensor matmul(const Tensor& a, const Tensor& b);

// Full reductions return a rank-0 tensor; axis reductions drop the axis.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor reshape(const Tensor& a, Shape shape);
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> indices);
// out.flat[i] = a.flat[source[i]]; backward scatter-adds.
Tensor take(const Tensor& a, std::span<const std::size_t> source, Shape shape);
Tensor detach(const Tensor& a);

// Value of `forward_values`, gradient of identity to `a`: a + sg[v - a]
// without the rounding of the explicit sum.
Tensor straight_through(const Tensor& a, const Tensor& forward_values);

// Softmax over the last axis.
Tensor softmax(const Tensor& a);

// Per-row normalization over the last axis followed by gain/shift.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  double epsilon);

// Multi-head scaled dot-product attention over [groups*seq_len x width]
// rows. Each group of seq_len consecutive rows attends only within itself.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::size_t heads, std::size_t seq_len);

// Attention probabilities for inspection: [groups, heads, seq, seq].
Tensor attention_weights(const Tensor& q, const Tensor& k, std::size_t heads,
                         std::size_t seq_len);

Tensor mse(const Tensor& a, const Tensor& b);

double l2_norm(std::span<const double> v);

/// Max relative error between autodiff and central differences,
/// relative to max(|g|, |fd|, 1e-8) per coordinate.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double eps);

// Same check across several inputs at once; f reads the inputs it closes
// over. Each input's values are perturbed in place and restored.
double finite_diff_check(const std::function<Tensor()>& f,
                         std::span<Tensor> inputs, double eps);

}  // namespace fvq

#endif  // FVQ_TENSOR_H_
