#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "gtno/graph.hpp"
#include "gtno/tensor.hpp"

namespace gtno {

/// Rotary position embedding applied per head.
///
/// The head width d_k is split into one contiguous partition per spatial
/// axis; inside partition a (width m_a) the pair (2j, 2j+1) is rotated by
/// base^(-2j/m_a) * axis_scale[a] * x_a.
struct RopeConfig {
  double base = 10000.0;
  std::vector<std::size_t> dims_per_axis;
  std::vector<double> axis_scale;

  /// Even split of head_dim over `axes` unit-box axes, scaled so the box
  /// diagonal spans an angle of 2*pi*scale.
  static RopeConfig for_unit_box(std::size_t head_dim, std::size_t axes, double scale = 1.0, double base = 10000.0);

  std::size_t head_dim() const;
  /// Throws ConfigError on odd or mismatched partitions.
  void validate(std::size_t positional_axes) const;
};

/// cos/sin of the rotation angles, one row per point, one column per pair.
struct RopeTable {
  Tensor cos;
  Tensor sin;
};

RopeTable make_rope_table(const Tensor& positions, const RopeConfig& cfg);

/// Rotates every row of vecs [L x d_k] by its position (tape-aware).
Tensor rope_encode(const Tensor& vecs, const Tensor& positions, const RopeConfig& cfg);

/// Parameters of one graph transformer block. Projection matrices stack the
/// heads row-wise: rows [k*d_k, (k+1)*d_k) of wq belong to head k.
struct GTBlockParams {
  std::size_t heads = 1;
  Tensor wq, wk, wv;  // [d x d]
  Tensor wo;          // [d x d]
  Tensor w1;          // [2d x d]
  Tensor w2;          // [d x 2d]
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  std::size_t width() const { return wq.shape()[1]; }
  std::size_t head_dim() const { return width() / heads; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, unit norms.
  static GTBlockParams init(std::size_t d, std::size_t heads, std::mt19937_64& rng);
  std::vector<Tensor*> tensors();
};

struct AttentionOptions {
  /// Apply the 1/|N_i| factor after the per-node softmax.
  bool neighborhood_average = true;
  bool use_rope = true;
  double ln_eps = 1e-5;
};

/// Everything about the graph that attention needs besides the features.
struct AttentionContext {
  const Graph* graph = nullptr;
  RopeTable rope;  // unset when RoPE is disabled
  std::vector<double> inv_degree;

  static AttentionContext make(const Graph& g, const RopeConfig& rope, bool use_rope);
};

/// Per-edge attention logits [E x H] in aggregation order (see Graph).
Tensor attention_logits(const Tensor& h, const AttentionContext& ctx, const GTBlockParams& p);
/// Per-edge softmax weights [E x H] in aggregation order.
Tensor attention_weights(const Tensor& h, const AttentionContext& ctx, const GTBlockParams& p);

/// Multi-head graph attention: softmax over each neighbourhood, value
/// average scaled by 1/|N_i|, heads concatenated and mixed by wo.
Tensor graph_self_attention(const Tensor& h, const AttentionContext& ctx, const GTBlockParams& p,
                            const AttentionOptions& opts = {});

/// Attn -> residual -> LayerNorm -> W2 ReLU(W1 .) -> residual -> LayerNorm.
Tensor graph_transformer_block(const Tensor& h, const AttentionContext& ctx, const GTBlockParams& p,
                               const AttentionOptions& opts = {});

/// Reference path: assembles for every edge (i, j) the explicit kernel
///   kappa_ij = O_h (w^1_ij V^1 (+) ... (+) w^H_ij V^H)
/// (block-diagonal heads acting on the stacked copies of h_j, with O_h
/// absorbed), and evaluates u_i = 1/|N_i| sum_j kappa_ij h_j. Rotations are
/// built as explicit matrices. Plain loops, no tape. O(L * deg * d^2).
Tensor kernel_oracle(const Tensor& h, const Graph& g, const GTBlockParams& p, const RopeConfig& rope,
                     const AttentionOptions& opts = {});

}  // namespace gtno
