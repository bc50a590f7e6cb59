#include <algorithm>
#include <limits>
#include "gtno/attention.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "gtno/errors.hpp"

namespace gtno {

namespace {

Tensor uniform_fan_in(std::size_t rows, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(rows * fan_in);
  for (double& x : v) x = dist(rng);
  return Tensor::from({rows, fan_in}, std::move(v), true);
}

// Angle of pair p (in partition order) at position row i.
template <class AngleSink>
void for_each_angle(const Tensor& positions, const RopeConfig& cfg, AngleSink&& sink) {
  const std::size_t axes = cfg.dims_per_axis.size();
  const std::size_t n = positions.shape()[1];
  for (std::size_t i = 0; i < positions.rows(); ++i) {
    std::size_t pair = 0;
    for (std::size_t a = 0; a < axes; ++a) {
      const std::size_t m = cfg.dims_per_axis[a];
      const double x = cfg.axis_scale[a] * positions[i * n + a];
      for (std::size_t j = 0; j < m / 2; ++j, ++pair) {
        const double freq = std::pow(cfg.base, -2.0 * static_cast<double>(j) / static_cast<double>(m));
        sink(i, pair, freq * x);
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// RoPE
// ---------------------------------------------------------------------------

RopeConfig RopeConfig::for_unit_box(std::size_t head_dim, std::size_t axes, double scale, double base) {
  if (head_dim % 2 != 0) throw ConfigError("RoPE needs an even head dimension");
  if (axes == 0) throw ConfigError("RoPE needs at least one axis");
  RopeConfig cfg;
  cfg.base = base;
  const std::size_t pairs = head_dim / 2;
  for (std::size_t a = 0; a < axes; ++a) {
    cfg.dims_per_axis.push_back(2 * (pairs / axes + (a < pairs % axes ? 1 : 0)));
  }
  const double per_axis = 2.0 * std::numbers::pi * scale / std::sqrt(static_cast<double>(axes));
  cfg.axis_scale.assign(axes, per_axis);
  return cfg;
}

std::size_t RopeConfig::head_dim() const {
  return std::accumulate(dims_per_axis.begin(), dims_per_axis.end(), std::size_t{0});
}

void RopeConfig::validate(std::size_t positional_axes) const {
  if (dims_per_axis.size() != positional_axes || axis_scale.size() != positional_axes) {
    throw ConfigError("RoPE partition count must equal the number of spatial axes");
  }
  for (std::size_t m : dims_per_axis) {
    if (m % 2 != 0) throw ConfigError("RoPE axis partitions must be even");
  }
  if (!(base > 0.0)) throw ConfigError("RoPE base must be positive");
}

RopeTable make_rope_table(const Tensor& positions, const RopeConfig& cfg) {
  cfg.validate(positions.shape()[1]);
  const std::size_t pairs = cfg.head_dim() / 2;
  if (pairs == 0) throw ConfigError("RoPE head dimension is zero");
  const std::size_t rows = positions.rows();
  std::vector<double> c(rows * pairs), s(rows * pairs);
  for_each_angle(positions, cfg, [&](std::size_t i, std::size_t p, double angle) {
    c[i * pairs + p] = std::cos(angle);
    s[i * pairs + p] = std::sin(angle);
  });
  return {Tensor::from({rows, pairs}, std::move(c)), Tensor::from({rows, pairs}, std::move(s))};
}

Tensor rope_encode(const Tensor& vecs, const Tensor& positions, const RopeConfig& cfg) {
  if (vecs.rank() != 2 || vecs.shape()[1] != cfg.head_dim() || vecs.rows() != positions.rows()) {
    throw ShapeError("rope_encode: vectors must be [L x d_k] matching the positions");
  }
  RopeTable t = make_rope_table(positions, cfg);
  return rotate_pairs(vecs, t.cos, t.sin);
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

GTBlockParams GTBlockParams::init(std::size_t d, std::size_t heads, std::mt19937_64& rng) {
  if (heads == 0 || d % heads != 0) throw ConfigError("head count must divide the block width");
  GTBlockParams p;
  p.heads = heads;
  p.wq = uniform_fan_in(d, d, rng);
  p.wk = uniform_fan_in(d, d, rng);
  p.wv = uniform_fan_in(d, d, rng);
  p.wo = uniform_fan_in(d, d, rng);
  p.w1 = uniform_fan_in(2 * d, d, rng);
  p.w2 = uniform_fan_in(d, 2 * d, rng);
  p.ln1_gain = Tensor::full({d}, 1.0, true);
  p.ln1_bias = Tensor::zeros({d}, true);
  p.ln2_gain = Tensor::full({d}, 1.0, true);
  p.ln2_bias = Tensor::zeros({d}, true);
  return p;
}

std::vector<Tensor*> GTBlockParams::tensors() {
  return {&wq, &wk, &wv, &wo, &w1, &w2, &ln1_gain, &ln1_bias, &ln2_gain, &ln2_bias};
}

AttentionContext AttentionContext::make(const Graph& g, const RopeConfig& rope, bool use_rope) {
  AttentionContext ctx;
  ctx.graph = &g;
  if (use_rope) ctx.rope = make_rope_table(g.points().positions(), rope);
  ctx.inv_degree = g.inverse_degrees();
  return ctx;
}

// ---------------------------------------------------------------------------
// Fast path
// ---------------------------------------------------------------------------

namespace {

struct Projected {
  Tensor q_edges, k_edges, v_edges;
};

Projected project_edges(const Tensor& h, const AttentionContext& ctx, const GTBlockParams& p) {
  const Graph& g = *ctx.graph;
  if (h.rank() != 2 || h.rows() != g.size()) throw ShapeError("attention input rows must match the graph size");
  if (h.shape()[1] != p.width()) throw ShapeError("attention input width does not match the block");
  Tensor q = linear(h, p.wq);
  Tensor k = linear(h, p.wk);
  Tensor v = linear(h, p.wv);
  if (ctx.rope.cos.defined()) {
    if (2 * ctx.rope.cos.shape()[1] != p.head_dim()) throw ConfigError("RoPE head dimension mismatch");
    q = rotate_pairs(q, ctx.rope.cos, ctx.rope.sin);
    k = rotate_pairs(k, ctx.rope.cos, ctx.rope.sin);
  }
  return {gather_rows(q, g.aggregation_centers()), gather_rows(k, g.aggregation_indices()),
          gather_rows(v, g.aggregation_indices())};
}

Tensor logits_from(const Projected& e, const GTBlockParams& p) {
  return scale(group_sum_cols(mul(e.q_edges, e.k_edges), p.heads),
               1.0 / std::sqrt(static_cast<double>(p.head_dim())));
}

}  // namespace

Tensor attention_logits(const Tensor& h, const AttentionContext& ctx, const GTBlockParams& p) {
  return logits_from(project_edges(h, ctx, p), p);
}

Tensor attention_weights(const Tensor& h, const AttentionContext& ctx, const GTBlockParams& p) {
  return segment_softmax(attention_logits(h, ctx, p), ctx.graph->offsets());
}

Tensor graph_self_attention(const Tensor& h, const AttentionContext& ctx, const GTBlockParams& p,
                            const AttentionOptions& opts) {
  Projected e = project_edges(h, ctx, p);
  Tensor w = segment_softmax(logits_from(e, p), ctx.graph->offsets());
  Tensor messages = mul(repeat_cols(w, p.head_dim()), e.v_edges);
  Tensor agg = segment_sum(messages, ctx.graph->offsets());
  if (opts.neighborhood_average) agg = scale_rows(agg, ctx.inv_degree);
  return linear(agg, p.wo);
}

Tensor graph_transformer_block(const Tensor& h, const AttentionContext& ctx, const GTBlockParams& p,
                               const AttentionOptions& opts) {
  Tensor attn = graph_self_attention(h, ctx, p, opts);
  Tensor x = layer_norm(add(h, attn), p.ln1_gain, p.ln1_bias, opts.ln_eps);
  Tensor ff = linear(relu(linear(x, p.w1)), p.w2);
  return layer_norm(add(x, ff), p.ln2_gain, p.ln2_bias, opts.ln_eps);
}

// ---------------------------------------------------------------------------
// Kernel-matrix reference path
// ---------------------------------------------------------------------------

namespace {

using Mat = std::vector<double>;  // row-major

// out[r] = sum_c m[r*cols + c] * v[c]
std::vector<double> matvec(const double* m, std::size_t rows, std::size_t cols, const double* v) {
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r] += m[r * cols + c] * v[c];
  return out;
}

// Explicit d_k x d_k block-diagonal rotation for one point.
Mat rotation_matrix(const Graph& g, std::size_t i, const RopeConfig& cfg) {
  const std::size_t dk = cfg.head_dim();
  Mat r(dk * dk, 0.0);
  std::size_t pair = 0;
  for (std::size_t a = 0; a < cfg.dims_per_axis.size(); ++a) {
    const std::size_t m = cfg.dims_per_axis[a];
    for (std::size_t j = 0; j < m / 2; ++j, ++pair) {
      const double theta = std::pow(cfg.base, -2.0 * static_cast<double>(j) / static_cast<double>(m)) *
                           cfg.axis_scale[a] * g.points().coord(i, a);
      const std::size_t b = 2 * pair;
      r[b * dk + b] = std::cos(theta);
      r[b * dk + b + 1] = -std::sin(theta);
      r[(b + 1) * dk + b] = std::sin(theta);
      r[(b + 1) * dk + b + 1] = std::cos(theta);
    }
  }
  return r;
}

}  // namespace

Tensor kernel_oracle(const Tensor& h, const Graph& g, const GTBlockParams& p, const RopeConfig& rope,
                     const AttentionOptions& opts) {
  const std::size_t L = g.size(), d = p.width(), H = p.heads, dk = p.head_dim();
  if (h.rank() != 2 || h.rows() != L || h.shape()[1] != d) throw ShapeError("kernel_oracle: input shape mismatch");
  const double* hv = h.data().data();
  const double* wq = p.wq.data().data();
  const double* wk = p.wk.data().data();
  const double* wv = p.wv.data().data();
  const double* wo = p.wo.data().data();

  // Per-node, per-head rotated queries and keys.
  std::vector<Mat> rot(L);
  if (opts.use_rope) {
    rope.validate(g.points().dims());
    if (rope.head_dim() != dk) throw ConfigError("RoPE head dimension mismatch");
    for (std::size_t i = 0; i < L; ++i) rot[i] = rotation_matrix(g, i, rope);
  }
  std::vector<std::vector<double>> qh(L * H), kh(L * H);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t k = 0; k < H; ++k) {
      auto q = matvec(wq + k * dk * d, dk, d, hv + i * d);
      auto kk = matvec(wk + k * dk * d, dk, d, hv + i * d);
      if (opts.use_rope) {
        q = matvec(rot[i].data(), dk, dk, q.data());
        kk = matvec(rot[i].data(), dk, dk, kk.data());
      }
      qh[i * H + k] = std::move(q);
      kh[i * H + k] = std::move(kk);
    }
  }

  std::vector<double> out(L * d, 0.0);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t i = 0; i < L; ++i) {
    auto nb = g.neighbors(i);
    // Softmax weights w^k_ij over the neighbourhood.
    std::vector<double> w(nb.size() * H);
    for (std::size_t k = 0; k < H; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> logit(nb.size());
      for (std::size_t t = 0; t < nb.size(); ++t) {
        double s = 0.0;
        for (std::size_t c = 0; c < dk; ++c) s += qh[i * H + k][c] * kh[nb[t] * H + k][c];
        logit[t] = s * inv_sqrt_dk;
        mx = std::max(mx, logit[t]);
      }
      double z = 0.0;
      for (std::size_t t = 0; t < nb.size(); ++t) z += std::exp(logit[t] - mx);
      for (std::size_t t = 0; t < nb.size(); ++t) w[t * H + k] = std::exp(logit[t] - mx) / z;
    }
    std::vector<double> acc(d, 0.0);
    for (std::size_t t = 0; t < nb.size(); ++t) {
      // Block-diagonal (w^1 V^1 (+) ... (+) w^H V^H): d x (H*d) acting on
      // [h_j; ...; h_j]. Stacking the head blocks collapses it to d x d.
      Mat blocks(d * d, 0.0);
      for (std::size_t k = 0; k < H; ++k)
        for (std::size_t r = 0; r < dk; ++r)
          for (std::size_t c = 0; c < d; ++c) blocks[(k * dk + r) * d + c] = w[t * H + k] * wv[(k * dk + r) * d + c];
      // kappa_ij = O_h * blocks
      Mat kappa(d * d, 0.0);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t m = 0; m < d; ++m)
          for (std::size_t c = 0; c < d; ++c) kappa[r * d + c] += wo[r * d + m] * blocks[m * d + c];
      auto contrib = matvec(kappa.data(), d, d, hv + nb[t] * d);
      for (std::size_t r = 0; r < d; ++r) acc[r] += contrib[r];
    }
    const double norm = opts.neighborhood_average ? 1.0 / static_cast<double>(nb.size()) : 1.0;
    for (std::size_t r = 0; r < d; ++r) out[i * d + r] = acc[r] * norm;
  }
  return Tensor::from({L, d}, std::move(out));
}

}  // namespace gtno
