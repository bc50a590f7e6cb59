#include "gtno/tensor.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gtno/errors.hpp"

namespace gtno {

namespace {

thread_local Tape* g_active_tape = nullptr;

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

std::vector<double>& grad_buffer(detail::TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericFault(std::string("non-finite value produced by ") + op);
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Builds the output tensor, checks it, and returns whether an adjoint must be
// recorded.
Tensor finish(Shape shape, std::vector<double> data, const char* op,
              std::initializer_list<const Tensor*> inputs, bool& record) {
  check_finite(data, op);
  record = needs_grad(inputs);
  return make_tensor(std::move(shape), std::move(data), record);
}

void record(std::function<void()> fn) { g_active_tape->record(std::move(fn)); }

// c[m x n] += a[m x k] * b[k x n]. Every c(i, j) accumulates over t in
// ascending order regardless of m, so a row's result never depends on which
// other rows are present.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[i * k + t];
      const double* bt = b + t * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

std::vector<double> transposed(const std::vector<double>& v, std::size_t r, std::size_t c) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return out;
}

std::size_t require_2d_cols(const Tensor& t, const char* op) {
  require(t.rank() == 2, std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
  return t.shape()[1];
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return make_tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return make_tensor({}, {value}, false); }

std::size_t Tensor::rows() const { return impl_->shape.empty() ? 1 : impl_->shape[0]; }

std::size_t Tensor::cols() const {
  if (impl_->shape.size() <= 1) return 1;
  return impl_->data.size() / impl_->shape[0];
}

std::size_t Tensor::last_dim() const { return impl_->shape.empty() ? 1 : impl_->shape.back(); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

std::span<double> Tensor::mutable_grad() { return grad_buffer(*impl_); }

Tensor Tensor::clone() const { return make_tensor(impl_->shape, impl_->data, impl_->requires_grad); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) throw ShapeError("reshape changes element count");
  return make_tensor(std::move(shape), impl_->data, false);
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

void Tape::record(std::function<void()> adjoint) { entries_.push_back(std::move(adjoint)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss");
  }
  auto& g = grad_buffer(*loss.impl());
  g[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr) throw ShapeError("backward called without an active tape");
  g_active_tape->backward(loss);
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace {

template <class Fwd, class Da, class Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Da da, Db db) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  const auto& av = a.impl()->data;
  const auto& bv = b.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  bool rec = false;
  Tensor y = finish(a.shape(), std::move(out), op, {&a, &b}, rec);
  if (rec) {
    ImplPtr pa = a.shared_impl(), pb = b.shared_impl(), py = y.shared_impl();
    record([pa, pb, py, da, db] {
      if (py->grad.empty()) return;
      const auto& gy = py->grad;
      if (pa->requires_grad) {
        auto& ga = grad_buffer(*pa);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += da(gy[i], pa->data[i], pb->data[i]);
      }
      if (pb->requires_grad) {
        auto& gb = grad_buffer(*pb);
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += db(gy[i], pa->data[i], pb->data[i]);
      }
    });
  }
  return y;
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Bwd bwd) {
  std::vector<double> out(a.numel());
  const auto& av = a.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  bool rec = false;
  Tensor y = finish(a.shape(), std::move(out), op, {&a}, rec);
  if (rec) {
    ImplPtr pa = a.shared_impl(), py = y.shared_impl();
    record([pa, py, bwd] {
      if (py->grad.empty()) return;
      auto& ga = grad_buffer(*pa);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += bwd(py->grad[i], pa->data[i], py->data[i]);
    });
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; }, [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; },
      [factor](double g, double, double) { return g * factor; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double g, double x, double) { return x > 0.0 ? g : 0.0; });
}

Tensor sqrt(const Tensor& a) {
  for (double x : a.data()) {
    if (x < 0.0) throw NumericFault("sqrt of negative value");
  }
  // Subgradient 0 at the origin.
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double g, double, double y) { return y > 0.0 ? g / (2.0 * y) : 0.0; });
}

Tensor add_row(const Tensor& x, const Tensor& b) {
  const std::size_t n = x.last_dim();
  require(b.numel() == n, "add_row: bias length " + std::to_string(b.numel()) + " != " + std::to_string(n));
  const std::size_t m = x.numel() / n;
  std::vector<double> out(x.impl()->data);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b.impl()->data[j];
  bool rec = false;
  Tensor y = finish(x.shape(), std::move(out), "add_row", {&x, &b}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), pb = b.shared_impl(), py = y.shared_impl();
    record([px, pb, py, m, n] {
      if (py->grad.empty()) return;
      const auto& gy = py->grad;
      if (px->requires_grad) {
        auto& gx = grad_buffer(*px);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
      }
      if (pb->requires_grad) {
        auto& gb = grad_buffer(*pb);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += gy[i * n + j];
      }
    });
  }
  return y;
}

Tensor mul_row(const Tensor& x, const Tensor& s) {
  const std::size_t n = x.last_dim();
  require(s.numel() == n, "mul_row: factor length mismatch");
  const std::size_t m = x.numel() / n;
  std::vector<double> out(x.impl()->data);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= s.impl()->data[j];
  bool rec = false;
  Tensor y = finish(x.shape(), std::move(out), "mul_row", {&x, &s}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), ps = s.shared_impl(), py = y.shared_impl();
    record([px, ps, py, m, n] {
      if (py->grad.empty()) return;
      const auto& gy = py->grad;
      if (px->requires_grad) {
        auto& gx = grad_buffer(*px);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gy[i * n + j] * ps->data[j];
      }
      if (ps->requires_grad) {
        auto& gs = grad_buffer(*ps);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gs[j] += gy[i * n + j] * px->data[i * n + j];
      }
    });
  }
  return y;
}

Tensor scale_rows(const Tensor& x, std::span<const double> factors) {
  const std::size_t m = x.rows();
  require(factors.size() == m, "scale_rows: factor count mismatch");
  const std::size_t n = x.cols();
  std::vector<double> f(factors.begin(), factors.end());
  std::vector<double> out(x.impl()->data);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= f[i];
  bool rec = false;
  Tensor y = finish(x.shape(), std::move(out), "scale_rows", {&x}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), py = y.shared_impl();
    record([px, py, f = std::move(f), m, n] {
      if (py->grad.empty()) return;
      auto& gx = grad_buffer(*px);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += py->grad[i * n + j] * f[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t k = require_2d_cols(a, "matmul");
  require_2d_cols(b, "matmul");
  require(b.shape()[0] == k, "matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                                 shape_str(b.shape()));
  const std::size_t m = a.shape()[0], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.impl()->data.data(), b.impl()->data.data(), out.data(), m, k, n);
  bool rec = false;
  Tensor y = finish({m, n}, std::move(out), "matmul", {&a, &b}, rec);
  if (rec) {
    ImplPtr pa = a.shared_impl(), pb = b.shared_impl(), py = y.shared_impl();
    record([pa, pb, py, m, k, n] {
      if (py->grad.empty()) return;
      if (pa->requires_grad) {
        const auto bt = transposed(pb->data, k, n);
        gemm_acc(py->grad.data(), bt.data(), grad_buffer(*pa).data(), m, n, k);
      }
      if (pb->requires_grad) {
        const auto at = transposed(pa->data, m, k);
        gemm_acc(at.data(), py->grad.data(), grad_buffer(*pb).data(), k, m, n);
      }
    });
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t in = require_2d_cols(x, "linear");
  require_2d_cols(w, "linear");
  require(w.shape()[1] == in, "linear: weight " + shape_str(w.shape()) + " incompatible with input " +
                                  shape_str(x.shape()));
  const std::size_t m = x.shape()[0], out_dim = w.shape()[0];
  const bool has_bias = b.defined();
  if (has_bias) require(b.numel() == out_dim, "linear: bias length mismatch");
  std::vector<double> out(m * out_dim, 0.0);
  const auto wt = transposed(w.impl()->data, out_dim, in);
  gemm_acc(x.impl()->data.data(), wt.data(), out.data(), m, in, out_dim);
  if (has_bias) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += b.impl()->data[j];
  }
  bool rec = false;
  Tensor y = finish({m, out_dim}, std::move(out), "linear", {&x, &w, &b}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), pw = w.shared_impl(), py = y.shared_impl();
    ImplPtr pb = has_bias ? b.shared_impl() : nullptr;
    record([px, pw, pb, py, m, in, out_dim] {
      if (py->grad.empty()) return;
      if (px->requires_grad) gemm_acc(py->grad.data(), pw->data.data(), grad_buffer(*px).data(), m, out_dim, in);
      if (pw->requires_grad) {
        const auto gyt = transposed(py->grad, m, out_dim);
        gemm_acc(gyt.data(), px->data.data(), grad_buffer(*pw).data(), out_dim, m, in);
      }
      if (pb && pb->requires_grad) {
        auto& gb = grad_buffer(*pb);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < out_dim; ++j) gb[j] += py->grad[i * out_dim + j];
      }
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  const std::size_t n = require_2d_cols(a, "transpose");
  const std::size_t m = a.shape()[0];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.impl()->data[i * n + j];
  bool rec = false;
  Tensor y = finish({n, m}, std::move(out), "transpose", {&a}, rec);
  if (rec) {
    ImplPtr pa = a.shared_impl(), py = y.shared_impl();
    record([pa, py, m, n] {
      if (py->grad.empty()) return;
      auto& ga = grad_buffer(*pa);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += py->grad[j * m + i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Shape manipulation and reductions
// ---------------------------------------------------------------------------

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == 2 && p.rows() == m, "concat_cols: row count mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& src = parts[k].impl()->data;
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
    offset += widths[k];
  }
  check_finite(out, "concat_cols");
  bool rec = false;
  if (g_active_tape != nullptr) {
    for (const Tensor& p : parts) rec = rec || p.requires_grad();
  }
  Tensor y = make_tensor({m, total}, std::move(out), rec);
  if (rec) {
    std::vector<ImplPtr> ps;
    for (const Tensor& p : parts) ps.push_back(p.shared_impl());
    ImplPtr py = y.shared_impl();
    record([ps, py, widths, m, total] {
      if (py->grad.empty()) return;
      std::size_t off = 0;
      for (std::size_t k = 0; k < ps.size(); ++k) {
        if (ps[k]->requires_grad) {
          auto& g = grad_buffer(*ps[k]);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += py->grad[i * total + off + j];
        }
        off += widths[k];
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  bool rec = false;
  Tensor y = finish({}, {s}, "sum", {&a}, rec);
  if (rec) {
    ImplPtr pa = a.shared_impl(), py = y.shared_impl();
    record([pa, py] {
      if (py->grad.empty()) return;
      auto& ga = grad_buffer(*pa);
      for (double& g : ga) g += py->grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.last_dim();
  require(gain.numel() == d && bias.numel() == d, "layer_norm: gain/bias length mismatch");
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t m = x.numel() / d;
  std::vector<double> xhat(x.numel()), inv_std(m), out(x.numel());
  const auto& xv = x.impl()->data;
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xv[i * d + j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gain.impl()->data[j] + bias.impl()->data[j];
    }
  }
  bool rec = false;
  Tensor y = finish(x.shape(), std::move(out), "layer_norm", {&x, &gain, &bias}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), pg = gain.shared_impl(), pb = bias.shared_impl(), py = y.shared_impl();
    record([px, pg, pb, py, xhat = std::move(xhat), inv_std = std::move(inv_std), m, d] {
      if (py->grad.empty()) return;
      const auto& gy = py->grad;
      if (pg->requires_grad) {
        auto& gg = grad_buffer(*pg);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) gg[j] += gy[i * d + j] * xhat[i * d + j];
      }
      if (pb->requires_grad) {
        auto& gb = grad_buffer(*pb);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[j] += gy[i * d + j];
      }
      if (px->requires_grad) {
        auto& gx = grad_buffer(*px);
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_dh = 0.0, mean_dh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = gy[i * d + j] * pg->data[j];
            mean_dh += dh;
            mean_dh_xh += dh * xhat[i * d + j];
          }
          mean_dh *= inv_d;
          mean_dh_xh *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = gy[i * d + j] * pg->data[j];
            gx[i * d + j] += inv_std[i] * (dh - mean_dh - xhat[i * d + j] * mean_dh_xh);
          }
        }
      }
    });
  }
  return y;
}

Tensor softmax(const Tensor& x) {
  const std::size_t n = x.last_dim();
  const std::size_t m = x.numel() / n;
  std::vector<double> out(x.numel());
  const auto& xv = x.impl()->data;
  for (std::size_t i = 0; i < m; ++i) {
    double mx = xv[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(xv[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  bool rec = false;
  Tensor y = finish(x.shape(), std::move(out), "softmax", {&x}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), py = y.shared_impl();
    record([px, py, m, n] {
      if (py->grad.empty()) return;
      auto& gx = grad_buffer(*px);
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += py->grad[i * n + j] * py->data[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += py->data[i * n + j] * (py->grad[i * n + j] - dot);
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Graph primitives
// ---------------------------------------------------------------------------

Tensor gather_rows(const Tensor& x, std::span<const std::uint32_t> index) {
  const std::size_t d = require_2d_cols(x, "gather_rows");
  const std::size_t n = x.shape()[0];
  const std::size_t e_count = index.size();
  require(e_count > 0, "gather_rows: empty index");
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  std::vector<double> out(e_count * d);
  for (std::size_t e = 0; e < e_count; ++e) {
    require(idx[e] < n, "gather_rows: index out of range");
    std::copy_n(x.impl()->data.begin() + static_cast<std::ptrdiff_t>(idx[e] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(e * d));
  }
  bool rec = false;
  Tensor y = finish({e_count, d}, std::move(out), "gather_rows", {&x}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), py = y.shared_impl();
    record([px, py, idx = std::move(idx), d] {
      if (py->grad.empty()) return;
      auto& gx = grad_buffer(*px);
      for (std::size_t e = 0; e < idx.size(); ++e)
        for (std::size_t j = 0; j < d; ++j) gx[idx[e] * d + j] += py->grad[e * d + j];
    });
  }
  return y;
}

Tensor segment_sum(const Tensor& x, std::span<const std::size_t> offsets) {
  const std::size_t d = require_2d_cols(x, "segment_sum");
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == x.shape()[0],
          "segment_sum: offsets do not cover the rows");
  const std::size_t s_count = offsets.size() - 1;
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  std::vector<double> out(s_count * d, 0.0);
  for (std::size_t s = 0; s < s_count; ++s) {
    require(off[s + 1] > off[s], "segment_sum: empty segment");
    for (std::size_t e = off[s]; e < off[s + 1]; ++e)
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += x.impl()->data[e * d + j];
  }
  bool rec = false;
  Tensor y = finish({s_count, d}, std::move(out), "segment_sum", {&x}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), py = y.shared_impl();
    record([px, py, off = std::move(off), d] {
      if (py->grad.empty()) return;
      auto& gx = grad_buffer(*px);
      for (std::size_t s = 0; s + 1 < off.size(); ++s)
        for (std::size_t e = off[s]; e < off[s + 1]; ++e)
          for (std::size_t j = 0; j < d; ++j) gx[e * d + j] += py->grad[s * d + j];
    });
  }
  return y;
}

Tensor segment_softmax(const Tensor& x, std::span<const std::size_t> offsets) {
  const std::size_t c = require_2d_cols(x, "segment_softmax");
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == x.shape()[0],
          "segment_softmax: offsets do not cover the rows");
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  const auto& xv = x.impl()->data;
  std::vector<double> out(x.numel());
  for (std::size_t s = 0; s + 1 < off.size(); ++s) {
    require(off[s + 1] > off[s], "segment_softmax: empty segment");
    for (std::size_t k = 0; k < c; ++k) {
      double mx = xv[off[s] * c + k];
      for (std::size_t e = off[s] + 1; e < off[s + 1]; ++e) mx = std::max(mx, xv[e * c + k]);
      double z = 0.0;
      for (std::size_t e = off[s]; e < off[s + 1]; ++e) {
        out[e * c + k] = std::exp(xv[e * c + k] - mx);
        z += out[e * c + k];
      }
      for (std::size_t e = off[s]; e < off[s + 1]; ++e) out[e * c + k] /= z;
    }
  }
  bool rec = false;
  Tensor y = finish(x.shape(), std::move(out), "segment_softmax", {&x}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), py = y.shared_impl();
    record([px, py, off = std::move(off), c] {
      if (py->grad.empty()) return;
      auto& gx = grad_buffer(*px);
      const auto& yv = py->data;
      const auto& gy = py->grad;
      for (std::size_t s = 0; s + 1 < off.size(); ++s) {
        for (std::size_t k = 0; k < c; ++k) {
          double dot = 0.0;
          for (std::size_t e = off[s]; e < off[s + 1]; ++e) dot += gy[e * c + k] * yv[e * c + k];
          for (std::size_t e = off[s]; e < off[s + 1]; ++e) gx[e * c + k] += yv[e * c + k] * (gy[e * c + k] - dot);
        }
      }
    });
  }
  return y;
}

Tensor group_sum_cols(const Tensor& x, std::size_t groups) {
  const std::size_t n = require_2d_cols(x, "group_sum_cols");
  require(groups > 0 && n % groups == 0, "group_sum_cols: groups must divide the width");
  const std::size_t m = x.shape()[0], w = n / groups;
  std::vector<double> out(m * groups, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t j = 0; j < w; ++j) out[i * groups + g] += x.impl()->data[i * n + g * w + j];
  bool rec = false;
  Tensor y = finish({m, groups}, std::move(out), "group_sum_cols", {&x}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), py = y.shared_impl();
    record([px, py, m, n, groups, w] {
      if (py->grad.empty()) return;
      auto& gx = grad_buffer(*px);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t g = 0; g < groups; ++g)
          for (std::size_t j = 0; j < w; ++j) gx[i * n + g * w + j] += py->grad[i * groups + g];
    });
  }
  return y;
}

Tensor repeat_cols(const Tensor& x, std::size_t width) {
  const std::size_t g_count = require_2d_cols(x, "repeat_cols");
  require(width > 0, "repeat_cols: width must be positive");
  const std::size_t m = x.shape()[0], n = g_count * width;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t g = 0; g < g_count; ++g)
      for (std::size_t j = 0; j < width; ++j) out[i * n + g * width + j] = x.impl()->data[i * g_count + g];
  bool rec = false;
  Tensor y = finish({m, n}, std::move(out), "repeat_cols", {&x}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), py = y.shared_impl();
    record([px, py, m, n, g_count, width] {
      if (py->grad.empty()) return;
      auto& gx = grad_buffer(*px);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t g = 0; g < g_count; ++g)
          for (std::size_t j = 0; j < width; ++j) gx[i * g_count + g] += py->grad[i * n + g * width + j];
    });
  }
  return y;
}

Tensor rotate_pairs(const Tensor& x, const Tensor& cos, const Tensor& sin) {
  const std::size_t n = require_2d_cols(x, "rotate_pairs");
  const std::size_t m = x.shape()[0];
  require(cos.shape() == sin.shape() && cos.rank() == 2 && cos.shape()[0] == m,
          "rotate_pairs: angle table shape mismatch");
  const std::size_t pairs = cos.shape()[1];
  const std::size_t block = 2 * pairs;
  require(n % block == 0, "rotate_pairs: width is not a multiple of the rotated block");
  const auto& xv = x.impl()->data;
  const auto& cv = cos.impl()->data;
  const auto& sv = sin.impl()->data;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t b = 0; b < n; b += block)
      for (std::size_t p = 0; p < pairs; ++p) {
        const std::size_t a0 = i * n + b + 2 * p;
        const double c = cv[i * pairs + p], s = sv[i * pairs + p];
        out[a0] = c * xv[a0] - s * xv[a0 + 1];
        out[a0 + 1] = s * xv[a0] + c * xv[a0 + 1];
      }
  bool rec = false;
  Tensor y = finish(x.shape(), std::move(out), "rotate_pairs", {&x}, rec);
  if (rec) {
    ImplPtr px = x.shared_impl(), pc = cos.shared_impl(), ps = sin.shared_impl(), py = y.shared_impl();
    record([px, pc, ps, py, m, n, pairs, block] {
      if (py->grad.empty()) return;
      auto& gx = grad_buffer(*px);
      const auto& gy = py->grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t b = 0; b < n; b += block)
          for (std::size_t p = 0; p < pairs; ++p) {
            const std::size_t a0 = i * n + b + 2 * p;
            const double c = pc->data[i * pairs + p], s = ps->data[i * pairs + p];
            gx[a0] += c * gy[a0] + s * gy[a0 + 1];
            gx[a0 + 1] += -s * gy[a0] + c * gy[a0 + 1];
          }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor()>& f, Tensor param, double step) {
  if (!(step > 0.0)) throw ConfigError("grad_check: step must be positive");
  const bool saved_flag = param.requires_grad();
  param.set_requires_grad(true);
  param.zero_grad();
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
    analytic = param.has_grad() ? std::vector<double>(param.grad().begin(), param.grad().end())
                                : std::vector<double>(param.numel(), 0.0);
  }
  param.zero_grad();
  param.set_requires_grad(saved_flag);

  auto values = param.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    values[i] = original + step;
    const double up = f().item();
    values[i] = original - step;
    const double down = f().item();
    values[i] = original;
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1e-8, std::abs(fd)));
  }
  return worst;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  Tensor leaf = x.clone();
  return grad_check([&] { return f(leaf); }, leaf, step);
}

}  // namespace gtno
