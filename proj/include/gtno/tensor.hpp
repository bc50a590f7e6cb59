#pragma once

// Dense row-major float64 tensors with tape-based reverse-mode autodiff.
//
// Every primitive checks its output for NaN/Inf and throws NumericFault.
// Primitives record an adjoint on the thread's active Tape only when some
// input requires a gradient; without an active tape they run as plain
// numeric kernels.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gtno {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until an adjoint reaches this tensor
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  /// Leading extent; for rank-1 tensors this is the length.
  std::size_t rows() const;
  /// Product of the trailing extents after the first (1 for rank <= 1).
  std::size_t cols() const;
  /// Extent of the last axis.
  std::size_t last_dim() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; empty span when no adjoint has been accumulated.
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  void zero_grad() { impl_->grad.clear(); }

  /// Deep copy of the values, detached from any tape.
  Tensor clone() const;
  /// Same shape and values under a different shape; must preserve numel.
  Tensor reshaped(Shape shape) const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& shared_impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad);
};

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad);

/// Ordered record of executed primitives. Replaying it in reverse
/// accumulates adjoints for every tensor reachable from the loss.
class Tape {
 public:
  void record(std::function<void()> adjoint);
  /// Seeds d(loss)/d(loss) = 1 and replays the record. The loss must hold
  /// exactly one element.
  void backward(const Tensor& loss);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<std::function<void()>> entries_;
};

/// Makes a tape the recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// OS (glibc only; a no-op elsewhere). Large tapes otherwise spend much of
/// their time in page faults.
void tune_allocator();

/// backward() on the thread's active tape.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Primitives. Shapes use [rows x cols] for 2-D operands.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sqrt(const Tensor& a);

/// x[m x n] + b[n] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& b);
/// x[m x n] * s[n] broadcast over rows.
Tensor mul_row(const Tensor& x, const Tensor& s);
/// Multiplies row i of x by the constant factors[i].
Tensor scale_rows(const Tensor& x, std::span<const double> factors);

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[m x in] * w[out x in]^T + b[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});
Tensor transpose(const Tensor& a);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Normalizes each last-axis row with its population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
/// Softmax along the last axis with max-shift.
Tensor softmax(const Tensor& x);

/// Row gather: out[e] = x[index[e]].
Tensor gather_rows(const Tensor& x, std::span<const std::uint32_t> index);
/// out[s] = sum of x rows in [offsets[s], offsets[s+1]).
Tensor segment_sum(const Tensor& x, std::span<const std::size_t> offsets);
/// Column-wise softmax inside each contiguous row segment.
Tensor segment_softmax(const Tensor& x, std::span<const std::size_t> offsets);
/// Sums each run of cols/groups adjacent columns: [m x g*w] -> [m x g].
Tensor group_sum_cols(const Tensor& x, std::size_t groups);
/// Repeats every column width times: [m x g] -> [m x g*width].
Tensor repeat_cols(const Tensor& x, std::size_t width);
/// Rotates column pairs (2p, 2p+1) of every head block of width 2*cos.cols()
/// by the per-row angle table: cos/sin are [m x pairs].
Tensor rotate_pairs(const Tensor& x, const Tensor& cos, const Tensor& sin);

// ---------------------------------------------------------------------------
// Finite-difference gradient check.
// ---------------------------------------------------------------------------

/// Compares the tape gradient of f with respect to param against central
/// differences, perturbing param in place. Returns
/// max_i |analytic_i - fd_i| / max(1e-8, |fd_i|).
double grad_check(const std::function<Tensor()>& f, Tensor param, double step);

/// Convenience form for scalar functions of a single tensor argument.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step);

}  // namespace gtno
