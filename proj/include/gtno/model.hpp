#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gtno/attention.hpp"
#include "gtno/graph.hpp"
#include "gtno/tensor.hpp"

namespace gtno {

enum class DecoderMode : std::uint8_t { steady = 0, rollout = 1 };
enum class PosEncoding : std::uint8_t { none = 0, concat_coords = 1, rope = 2 };
enum class GraphKind : std::uint8_t { radius = 0, knn = 1 };

std::string to_string(DecoderMode m);
std::string to_string(PosEncoding p);
std::string to_string(GraphKind g);
DecoderMode parse_decoder_mode(const std::string& s);
PosEncoding parse_pos_encoding(const std::string& s);
GraphKind parse_graph_kind(const std::string& s);

struct ModelConfig {
  std::uint32_t in_channels = 1;
  std::uint32_t out_channels = 1;
  std::uint32_t spatial_dims = 2;
  std::uint32_t d_model = 32;
  std::uint32_t n_gt_blocks = 2;
  std::uint32_t n_heads = 4;
  std::uint32_t d_dec = 64;
  std::uint32_t n_out_mlp_layers = 2;
  std::uint32_t n_prop_mlp_layers = 3;
  std::uint32_t cross_heads = 4;
  /// Width of the Fourier embedding; 0 means d_model.
  std::uint32_t gf_dim = 0;
  double gf_sigma = 5.0;
  double rope_base = 10000.0;
  double rope_scale = 1.0;
  PosEncoding pos_enc = PosEncoding::rope;
  GraphKind graph_kind = GraphKind::radius;
  double radius = 0.1;
  std::uint32_t knn_k = 8;
  DecoderMode mode = DecoderMode::steady;
  std::uint32_t rollout_steps = 1;
  bool attn_avg = true;
  double ln_eps = 1e-5;
  std::uint64_t seed = 0;

  std::uint32_t fourier_dim() const { return gf_dim == 0 ? d_model : gf_dim; }
  std::uint32_t node_feature_width() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LinearLayer {
  Tensor w;  // [out x in]
  Tensor b;  // [out]
  Tensor apply(const Tensor& x) const { return linear(x, w, b); }
  static LinearLayer init(std::size_t in, std::size_t out, std::mt19937_64& rng);
};

/// Linear layers with ReLU between consecutive layers (none after the last).
struct Mlp {
  std::vector<LinearLayer> layers;
  Tensor apply(const Tensor& x) const;
  /// widths = {in, hidden..., out}.
  static Mlp init(const std::vector<std::size_t>& widths, std::mt19937_64& rng);
};

struct CrossFormerParams {
  std::size_t heads = 1;
  Tensor wq, wk, wv;  // [d x d]
  Tensor ln_k_gain, ln_k_bias, ln_v_gain, ln_v_bias;
  Tensor ln1_gain, ln1_bias;
  LinearLayer ffn1, ffn2;
  Tensor ln2_gain, ln2_bias;

  static CrossFormerParams init(std::size_t d, std::size_t heads, std::mt19937_64& rng);
};

/// Softmax-free Galerkin cross-attention Q (K^T V) / L with layer-normalized
/// K and V from the input nodes and Q from the query stream; heads use
/// disjoint diagonal blocks of K^T V. `order`, when non-empty, fixes the
/// summation order over input nodes.
Tensor galerkin_attention(const Tensor& h_input, const Tensor& h_query, const CrossFormerParams& p, double ln_eps,
                          std::span<const std::uint32_t> order = {});

/// Attn-Norm-MLP-Norm block around galerkin_attention, residuals on the
/// query stream.
Tensor cross_attention(const Tensor& h_input, const Tensor& h_query, const CrossFormerParams& p, double ln_eps,
                       std::span<const std::uint32_t> order = {});

/// [sin(2 pi x B) | cos(2 pi x B)] for positions x [L' x n], B [n x m].
Tensor fourier_features(const Tensor& positions, const Tensor& projection);

/// Input discretization prepared once and reused across forward passes.
struct InputContext {
  std::shared_ptr<const Graph> graph;  // built on unit-box coordinates
  AttentionContext attention;
};

/// Query discretization prepared once: unit-box coordinates and their
/// (parameter-free) Fourier features.
struct QueryContext {
  Tensor unit_positions;
  Tensor fourier;
  std::size_t size() const { return unit_positions.rows(); }
};

struct Prediction {
  /// One [L' x out_channels] tensor per output frame (one frame in steady
  /// mode).
  std::vector<Tensor> frames;
};

/// Full graph-transformer neural operator: input encoder, query encoder with
/// cross-attention fusion, and a steady or recurrent decoder.
class OperatorModel {
 public:
  explicit OperatorModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  InputContext prepare_input(const PointSet& points) const;
  QueryContext prepare_query(const PointSet& points) const;

  /// [theta | unit coords] (or theta alone without positional input).
  Tensor node_features(const Tensor& theta, const InputContext& in) const;
  /// FC_in followed by the stack of graph transformer blocks.
  Tensor encode_features(const Tensor& features, const AttentionContext& ctx) const;
  Tensor encode_input(const Tensor& theta, const InputContext& in) const;
  /// MLP_qry(gamma(x)).
  Tensor encode_query(const QueryContext& q) const;
  Tensor fuse(const Tensor& h_input, const Tensor& h_query, const InputContext& in) const;

  Tensor decode_steady(const Tensor& h_enc, const QueryContext& q) const;
  std::vector<Tensor> decode_rollout(const Tensor& h_enc, const QueryContext& q, std::size_t steps) const;

  Prediction forward(const Tensor& theta, const InputContext& in, const QueryContext& q) const;
  Prediction forward(const Tensor& theta, const PointSet& input_points, const PointSet& query_points) const;

  /// Every tensor of the model in a fixed order. Frozen tensors
  /// (requires_grad == false) are included.
  std::vector<std::pair<std::string, Tensor*>> named_tensors();
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  /// The trainable subset of named_tensors().
  std::vector<Tensor*> parameters();
  std::size_t parameter_count() const;

  /// Per-channel affine maps applied to theta on input and to the decoder
  /// output. Identity by default.
  void set_normalization(std::vector<double> in_mean, std::vector<double> in_std, std::vector<double> out_mean,
                         std::vector<double> out_std);

  // Direct access for tests and tools.
  LinearLayer fc_in;
  std::vector<GTBlockParams> blocks;
  Tensor gf_projection;  // [n x fourier_dim/2], frozen
  Mlp mlp_qry;
  CrossFormerParams cross;
  Mlp mlp_out;
  Mlp mlp_prop;  // empty in steady mode
  Tensor in_mean, in_inv_std, out_mean, out_std;  // frozen

 private:
  Tensor decode_frame(const Tensor& h, const QueryContext& q) const;
  AttentionOptions attention_options() const;
  RopeConfig rope_config() const;

  ModelConfig cfg_;
};

}  // namespace gtno
