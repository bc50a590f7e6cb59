#include "gtno/model.hpp"

#include <cmath>
#include <numbers>

#include "gtno/errors.hpp"

namespace gtno {

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

std::string to_string(DecoderMode m) { return m == DecoderMode::steady ? "steady" : "rollout"; }

std::string to_string(PosEncoding p) {
  switch (p) {
    case PosEncoding::none: return "none";
    case PosEncoding::concat_coords: return "concat-coords";
    case PosEncoding::rope: return "rope";
  }
  return "?";
}

std::string to_string(GraphKind g) { return g == GraphKind::radius ? "radius" : "knn"; }

DecoderMode parse_decoder_mode(const std::string& s) {
  if (s == "steady") return DecoderMode::steady;
  if (s == "rollout") return DecoderMode::rollout;
  throw ConfigError("unknown decoder mode '" + s + "'");
}

PosEncoding parse_pos_encoding(const std::string& s) {
  if (s == "none") return PosEncoding::none;
  if (s == "concat-coords" || s == "concat") return PosEncoding::concat_coords;
  if (s == "rope") return PosEncoding::rope;
  throw ConfigError("unknown position encoding '" + s + "'");
}

GraphKind parse_graph_kind(const std::string& s) {
  if (s == "radius") return GraphKind::radius;
  if (s == "knn") return GraphKind::knn;
  throw ConfigError("unknown graph kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// ModelConfig
// ---------------------------------------------------------------------------

std::uint32_t ModelConfig::node_feature_width() const {
  return in_channels + (pos_enc == PosEncoding::none ? 0 : spatial_dims);
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(in_channels > 0 && out_channels > 0, "channel counts must be positive");
  need(spatial_dims >= 1 && spatial_dims <= 3, "spatial_dims must be 1, 2 or 3");
  need(d_model > 0 && d_dec > 0, "model widths must be positive");
  need(n_heads > 0 && d_model % n_heads == 0, "n_heads must divide d_model");
  need(cross_heads > 0 && d_model % cross_heads == 0, "cross_heads must divide d_model");
  need(n_out_mlp_layers >= 1, "MLP_out needs at least one layer");
  need(fourier_dim() % 2 == 0 && fourier_dim() > 0, "Fourier embedding width must be even");
  need(gf_sigma > 0.0, "gf_sigma must be positive");
  need(ln_eps > 0.0, "ln_eps must be positive");
  if (pos_enc == PosEncoding::rope) {
    need((d_model / n_heads) % 2 == 0, "RoPE needs an even head dimension");
    need(rope_base > 0.0, "rope_base must be positive");
  }
  if (graph_kind == GraphKind::radius) need(radius > 0.0, "graph radius must be positive");
  if (graph_kind == GraphKind::knn) need(knn_k >= 1, "knn_k must be at least 1");
  if (mode == DecoderMode::rollout) {
    need(rollout_steps >= 1, "rollout needs at least one step");
    need(n_prop_mlp_layers >= 1, "MLP_prop needs at least one layer");
  }
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

LinearLayer LinearLayer::init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(out * in), b(out);
  for (double& x : w) x = dist(rng);
  for (double& x : b) x = dist(rng);
  return {Tensor::from({out, in}, std::move(w), true), Tensor::from({out}, std::move(b), true)};
}

Tensor Mlp::apply(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].apply(h);
    if (i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

Mlp Mlp::init(const std::vector<std::size_t>& widths, std::mt19937_64& rng) {
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) m.layers.push_back(LinearLayer::init(widths[i], widths[i + 1], rng));
  return m;
}

CrossFormerParams CrossFormerParams::init(std::size_t d, std::size_t heads, std::mt19937_64& rng) {
  CrossFormerParams p;
  p.heads = heads;
  auto square = [&] {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(d * d);
    for (double& x : v) x = dist(rng);
    return Tensor::from({d, d}, std::move(v), true);
  };
  p.wq = square();
  p.wk = square();
  p.wv = square();
  auto ones = [d] { return Tensor::full({d}, 1.0, true); };
  auto zeros = [d] { return Tensor::zeros({d}, true); };
  p.ln_k_gain = ones();
  p.ln_k_bias = zeros();
  p.ln_v_gain = ones();
  p.ln_v_bias = zeros();
  p.ln1_gain = ones();
  p.ln1_bias = zeros();
  p.ffn1 = LinearLayer::init(d, 2 * d, rng);
  p.ffn2 = LinearLayer::init(2 * d, d, rng);
  p.ln2_gain = ones();
  p.ln2_bias = zeros();
  return p;
}

Tensor galerkin_attention(const Tensor& h_input, const Tensor& h_query, const CrossFormerParams& p, double ln_eps,
                          std::span<const std::uint32_t> order) {
  if (h_input.rank() != 2 || h_query.rank() != 2 || h_input.shape()[1] != h_query.shape()[1]) {
    throw ShapeError("cross-attention widths differ");
  }
  const std::size_t d = h_input.shape()[1];
  const std::size_t L = h_input.rows();
  if (p.heads == 0 || d % p.heads != 0) throw ConfigError("cross-attention heads must divide the width");
  Tensor src = order.empty() ? h_input : gather_rows(h_input, order);
  Tensor k = layer_norm(linear(src, p.wk), p.ln_k_gain, p.ln_k_bias, ln_eps);
  Tensor v = layer_norm(linear(src, p.wv), p.ln_v_gain, p.ln_v_bias, ln_eps);
  Tensor q = linear(h_query, p.wq);
  Tensor kv = scale(matmul(transpose(k), v), 1.0 / static_cast<double>(L));
  if (p.heads > 1) {
    const std::size_t dk = d / p.heads;
    std::vector<double> mask(d * d, 0.0);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) mask[r * d + c] = (r / dk == c / dk) ? 1.0 : 0.0;
    kv = mul(kv, Tensor::from({d, d}, std::move(mask)));
  }
  return matmul(q, kv);
}

Tensor cross_attention(const Tensor& h_input, const Tensor& h_query, const CrossFormerParams& p, double ln_eps,
                       std::span<const std::uint32_t> order) {
  Tensor a = galerkin_attention(h_input, h_query, p, ln_eps, order);
  Tensor x = layer_norm(add(h_query, a), p.ln1_gain, p.ln1_bias, ln_eps);
  Tensor ff = p.ffn2.apply(relu(p.ffn1.apply(x)));
  return layer_norm(add(x, ff), p.ln2_gain, p.ln2_bias, ln_eps);
}

Tensor fourier_features(const Tensor& positions, const Tensor& projection) {
  const std::size_t n = positions.shape()[1];
  if (projection.rank() != 2 || projection.shape()[0] != n) throw ShapeError("Fourier projection rows must equal dims");
  const std::size_t m = projection.shape()[1];
  const std::size_t rows = positions.rows();
  std::vector<double> out(rows * 2 * m);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < m; ++c) {
      double z = 0.0;
      for (std::size_t a = 0; a < n; ++a) z += positions[i * n + a] * projection[a * m + c];
      const double angle = 2.0 * std::numbers::pi * z;
      out[i * 2 * m + c] = std::sin(angle);
      out[i * 2 * m + m + c] = std::cos(angle);
    }
  }
  return Tensor::from({rows, 2 * m}, std::move(out));
}

// ---------------------------------------------------------------------------
// OperatorModel
// ---------------------------------------------------------------------------

OperatorModel::OperatorModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const std::size_t d = cfg_.d_model, n = cfg_.spatial_dims;

  fc_in = LinearLayer::init(cfg_.node_feature_width(), d, rng);
  for (std::uint32_t b = 0; b < cfg_.n_gt_blocks; ++b) blocks.push_back(GTBlockParams::init(d, cfg_.n_heads, rng));

  const std::size_t half = cfg_.fourier_dim() / 2;
  std::normal_distribution<double> normal(0.0, cfg_.gf_sigma);
  std::vector<double> bvals(n * half);
  for (double& x : bvals) x = normal(rng);
  gf_projection = Tensor::from({n, half}, std::move(bvals), false);

  mlp_qry = Mlp::init({cfg_.fourier_dim(), d, d}, rng);
  cross = CrossFormerParams::init(d, cfg_.cross_heads, rng);

  std::vector<std::size_t> out_widths{d + n};
  for (std::uint32_t i = 0; i + 1 < cfg_.n_out_mlp_layers; ++i) out_widths.push_back(cfg_.d_dec);
  out_widths.push_back(cfg_.out_channels);
  mlp_out = Mlp::init(out_widths, rng);

  if (cfg_.mode == DecoderMode::rollout) {
    std::vector<std::size_t> prop_widths{d + n};
    for (std::uint32_t i = 0; i + 1 < cfg_.n_prop_mlp_layers; ++i) prop_widths.push_back(cfg_.d_dec);
    prop_widths.push_back(d);
    mlp_prop = Mlp::init(prop_widths, rng);
  }

  in_mean = Tensor::zeros({cfg_.in_channels});
  in_inv_std = Tensor::full({cfg_.in_channels}, 1.0);
  out_mean = Tensor::zeros({cfg_.out_channels});
  out_std = Tensor::full({cfg_.out_channels}, 1.0);
}

void OperatorModel::set_normalization(std::vector<double> im, std::vector<double> is, std::vector<double> om,
                                      std::vector<double> os) {
  if (im.size() != cfg_.in_channels || is.size() != cfg_.in_channels || om.size() != cfg_.out_channels ||
      os.size() != cfg_.out_channels) {
    throw ShapeError("normalization statistics do not match the channel counts");
  }
  for (double& s : is) {
    if (!(s > 0.0)) throw ConfigError("normalization scale must be positive");
    s = 1.0 / s;
  }
  in_mean = Tensor::from({cfg_.in_channels}, std::move(im));
  in_inv_std = Tensor::from({cfg_.in_channels}, std::move(is));
  out_mean = Tensor::from({cfg_.out_channels}, std::move(om));
  out_std = Tensor::from({cfg_.out_channels}, std::move(os));
}

RopeConfig OperatorModel::rope_config() const {
  return RopeConfig::for_unit_box(cfg_.d_model / cfg_.n_heads, cfg_.spatial_dims, cfg_.rope_scale, cfg_.rope_base);
}

AttentionOptions OperatorModel::attention_options() const {
  AttentionOptions o;
  o.neighborhood_average = cfg_.attn_avg;
  o.use_rope = cfg_.pos_enc == PosEncoding::rope;
  o.ln_eps = cfg_.ln_eps;
  return o;
}

InputContext OperatorModel::prepare_input(const PointSet& points) const {
  if (points.dims() != cfg_.spatial_dims) throw ShapeError("input points have the wrong dimension");
  PointSet unit = points.to_unit_box();
  InputContext in;
  in.graph = std::make_shared<const Graph>(cfg_.graph_kind == GraphKind::radius
                                               ? build_radius_graph(unit, cfg_.radius)
                                               : build_knn_graph(unit, std::min<std::size_t>(cfg_.knn_k, unit.size())));
  in.attention = AttentionContext::make(*in.graph, rope_config(), cfg_.pos_enc == PosEncoding::rope);
  return in;
}

QueryContext OperatorModel::prepare_query(const PointSet& points) const {
  if (points.dims() != cfg_.spatial_dims) throw ShapeError("query points have the wrong dimension");
  QueryContext q;
  q.unit_positions = points.to_unit_box().positions();
  q.fourier = fourier_features(q.unit_positions, gf_projection);
  return q;
}

Tensor OperatorModel::node_features(const Tensor& theta, const InputContext& in) const {
  if (theta.rank() != 2 || theta.rows() != in.graph->size() || theta.shape()[1] != cfg_.in_channels) {
    throw ShapeError("theta must be [L x in_channels], got " + shape_str(theta.shape()));
  }
  Tensor scaled = mul_row(add_row(theta, scale(in_mean, -1.0)), in_inv_std);
  if (cfg_.pos_enc == PosEncoding::none) return scaled;
  return concat_cols({scaled, in.graph->points().positions()});
}

Tensor OperatorModel::encode_features(const Tensor& features, const AttentionContext& ctx) const {
  if (features.rank() != 2 || features.shape()[1] != cfg_.node_feature_width()) {
    throw ShapeError("node feature width " + std::to_string(features.rank() == 2 ? features.shape()[1] : 0) +
                     " != expected " + std::to_string(cfg_.node_feature_width()));
  }
  Tensor h = fc_in.apply(features);
  const AttentionOptions opts = attention_options();
  for (const auto& block : blocks) h = graph_transformer_block(h, ctx, block, opts);
  return h;
}

Tensor OperatorModel::encode_input(const Tensor& theta, const InputContext& in) const {
  return encode_features(node_features(theta, in), in.attention);
}

Tensor OperatorModel::encode_query(const QueryContext& q) const { return mlp_qry.apply(q.fourier); }

Tensor OperatorModel::fuse(const Tensor& h_input, const Tensor& h_query, const InputContext& in) const {
  return cross_attention(h_input, h_query, cross, cfg_.ln_eps, in.graph->canonical_order());
}

Tensor OperatorModel::decode_frame(const Tensor& h, const QueryContext& q) const {
  Tensor y = mlp_out.apply(concat_cols({h, q.unit_positions}));
  return add_row(mul_row(y, out_std), out_mean);
}

Tensor OperatorModel::decode_steady(const Tensor& h_enc, const QueryContext& q) const {
  if (cfg_.mode != DecoderMode::steady) throw ConfigError("decode_steady called on a rollout model");
  if (h_enc.rows() != q.size()) throw ShapeError("latent rows must equal the query count");
  return decode_frame(h_enc, q);
}

std::vector<Tensor> OperatorModel::decode_rollout(const Tensor& h_enc, const QueryContext& q, std::size_t steps) const {
  if (cfg_.mode != DecoderMode::rollout) throw ConfigError("decode_rollout called on a steady model");
  if (steps < 1) throw ConfigError("rollout needs at least one step");
  if (h_enc.rows() != q.size()) throw ShapeError("latent rows must equal the query count");
  std::vector<Tensor> frames;
  frames.reserve(steps);
  Tensor h = h_enc;
  for (std::size_t t = 0; t < steps; ++t) {
    h = add(mlp_prop.apply(concat_cols({h, q.unit_positions})), h);
    frames.push_back(decode_frame(h, q));
  }
  return frames;
}

Prediction OperatorModel::forward(const Tensor& theta, const InputContext& in, const QueryContext& q) const {
  Tensor h_in = encode_input(theta, in);
  Tensor h_q = encode_query(q);
  Tensor h_enc = fuse(h_in, h_q, in);
  Prediction p;
  if (cfg_.mode == DecoderMode::steady) {
    p.frames.push_back(decode_steady(h_enc, q));
  } else {
    p.frames = decode_rollout(h_enc, q, cfg_.rollout_steps);
  }
  return p;
}

Prediction OperatorModel::forward(const Tensor& theta, const PointSet& input_points, const PointSet& query_points) const {
  return forward(theta, prepare_input(input_points), prepare_query(query_points));
}

std::vector<std::pair<std::string, Tensor*>> OperatorModel::named_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto lin = [&out](const std::string& prefix, LinearLayer& l) {
    out.emplace_back(prefix + ".w", &l.w);
    out.emplace_back(prefix + ".b", &l.b);
  };
  lin("fc_in", fc_in);
  static const char* block_names[] = {"wq", "wk", "wv", "wo", "w1", "w2", "ln1.g", "ln1.b", "ln2.g", "ln2.b"};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    auto ts = blocks[b].tensors();
    for (std::size_t t = 0; t < ts.size(); ++t) out.emplace_back("gt" + std::to_string(b) + "." + block_names[t], ts[t]);
  }
  out.emplace_back("gf.B", &gf_projection);
  for (std::size_t i = 0; i < mlp_qry.layers.size(); ++i) lin("qry.l" + std::to_string(i), mlp_qry.layers[i]);
  out.emplace_back("cross.wq", &cross.wq);
  out.emplace_back("cross.wk", &cross.wk);
  out.emplace_back("cross.wv", &cross.wv);
  out.emplace_back("cross.ln_k.g", &cross.ln_k_gain);
  out.emplace_back("cross.ln_k.b", &cross.ln_k_bias);
  out.emplace_back("cross.ln_v.g", &cross.ln_v_gain);
  out.emplace_back("cross.ln_v.b", &cross.ln_v_bias);
  out.emplace_back("cross.ln1.g", &cross.ln1_gain);
  out.emplace_back("cross.ln1.b", &cross.ln1_bias);
  lin("cross.ffn1", cross.ffn1);
  lin("cross.ffn2", cross.ffn2);
  out.emplace_back("cross.ln2.g", &cross.ln2_gain);
  out.emplace_back("cross.ln2.b", &cross.ln2_bias);
  for (std::size_t i = 0; i < mlp_out.layers.size(); ++i) lin("out.l" + std::to_string(i), mlp_out.layers[i]);
  for (std::size_t i = 0; i < mlp_prop.layers.size(); ++i) lin("prop.l" + std::to_string(i), mlp_prop.layers[i]);
  out.emplace_back("norm.in_mean", &in_mean);
  out.emplace_back("norm.in_inv_std", &in_inv_std);
  out.emplace_back("norm.out_mean", &out_mean);
  out.emplace_back("norm.out_std", &out_std);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> OperatorModel::named_tensors() const {
  auto mut = const_cast<OperatorModel*>(this)->named_tensors();
  return {mut.begin(), mut.end()};
}

std::vector<Tensor*> OperatorModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& [name, t] : named_tensors()) {
    if (t->requires_grad()) out.push_back(t);
  }
  return out;
}

std::size_t OperatorModel::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named_tensors()) {
    if (t->requires_grad()) n += t->numel();
  }
  return n;
}

}  // namespace gtno
