#include "gtno/checkpoint.hpp"

#include <map>

#include "binary_io.hpp"

namespace gtno {

namespace {

using detail::Reader;
using detail::Writer;

void write_config(Writer& w, const ModelConfig& c) {
  w.put<std::uint32_t>(c.in_channels);
  w.put<std::uint32_t>(c.out_channels);
  w.put<std::uint32_t>(c.spatial_dims);
  w.put<std::uint32_t>(c.d_model);
  w.put<std::uint32_t>(c.n_gt_blocks);
  w.put<std::uint32_t>(c.n_heads);
  w.put<std::uint32_t>(c.d_dec);
  w.put<std::uint32_t>(c.n_out_mlp_layers);
  w.put<std::uint32_t>(c.n_prop_mlp_layers);
  w.put<std::uint32_t>(c.cross_heads);
  w.put<std::uint32_t>(c.gf_dim);
  w.put<double>(c.gf_sigma);
  w.put<double>(c.rope_base);
  w.put<double>(c.rope_scale);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.pos_enc));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.graph_kind));
  w.put<double>(c.radius);
  w.put<std::uint32_t>(c.knn_k);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.mode));
  w.put<std::uint32_t>(c.rollout_steps);
  w.put<std::uint8_t>(c.attn_avg ? 1 : 0);
  w.put<double>(c.ln_eps);
  w.put<std::uint64_t>(c.seed);
}

ModelConfig read_config(Reader& r) {
  ModelConfig c;
  c.in_channels = r.get<std::uint32_t>();
  c.out_channels = r.get<std::uint32_t>();
  c.spatial_dims = r.get<std::uint32_t>();
  c.d_model = r.get<std::uint32_t>();
  c.n_gt_blocks = r.get<std::uint32_t>();
  c.n_heads = r.get<std::uint32_t>();
  c.d_dec = r.get<std::uint32_t>();
  c.n_out_mlp_layers = r.get<std::uint32_t>();
  c.n_prop_mlp_layers = r.get<std::uint32_t>();
  c.cross_heads = r.get<std::uint32_t>();
  c.gf_dim = r.get<std::uint32_t>();
  c.gf_sigma = r.get<double>();
  c.rope_base = r.get<double>();
  c.rope_scale = r.get<double>();
  const auto pe = r.get<std::uint8_t>();
  const auto gk = r.get<std::uint8_t>();
  c.radius = r.get<double>();
  c.knn_k = r.get<std::uint32_t>();
  const auto mode = r.get<std::uint8_t>();
  c.rollout_steps = r.get<std::uint32_t>();
  const auto avg = r.get<std::uint8_t>();
  c.ln_eps = r.get<double>();
  c.seed = r.get<std::uint64_t>();
  if (pe > 2 || gk > 1 || mode > 1 || avg > 1) throw FormatError("checkpoint config has an invalid enum value");
  c.pos_enc = static_cast<PosEncoding>(pe);
  c.graph_kind = static_cast<GraphKind>(gk);
  c.mode = static_cast<DecoderMode>(mode);
  c.attn_avg = avg != 0;
  return c;
}

void write_blob(Writer& w, const std::string& name, const Shape& shape, const std::vector<double>& data) {
  w.str16(name);
  if (shape.size() > 0xFF) throw FormatError("tensor rank too large");
  w.put<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t e : shape) {
    if (e > 0xFFFFFFFFu) throw FormatError("tensor extent too large");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
  }
  w.f64s(data);
}

struct Blob {
  Shape shape;
  std::vector<double> data;
};

Blob read_blob(Reader& r, std::string& name) {
  name = r.str16();
  Blob b;
  const auto rank = r.get<std::uint8_t>();
  std::size_t n = 1;
  for (std::uint8_t i = 0; i < rank; ++i) {
    const auto e = r.get<std::uint32_t>();
    if (e == 0) throw FormatError("tensor '" + name + "' has a zero extent");
    b.shape.push_back(e);
    n *= e;
  }
  b.data = r.f64s(n);
  return b;
}

Writer serialize(const OperatorModel& model, const TrainingState* state) {
  Writer w;
  w.header(detail::kKindCheckpoint);
  write_config(w, model.config());
  const auto tensors = model.named_tensors();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_blob(w, name, t->shape(), std::vector<double>(t->data().begin(), t->data().end()));
  }
  w.put<std::uint8_t>(state ? 1 : 0);
  if (state) {
    w.put<std::uint64_t>(state->step);
    w.put<std::uint64_t>(state->total_steps);
    w.put<std::uint64_t>(state->epoch);
    w.put<double>(state->best_metric);
    if (state->adam_m.size() != state->adam_v.size()) throw ShapeError("Adam moment lists differ in length");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(state->adam_m.size()));
    for (std::size_t i = 0; i < state->adam_m.size(); ++i) {
      write_blob(w, "adam.m", {state->adam_m[i].size()}, state->adam_m[i]);
      write_blob(w, "adam.v", {state->adam_v[i].size()}, state->adam_v[i]);
    }
  }
  return w;
}

}  // namespace

std::vector<char> checkpoint_bytes(const OperatorModel& model, const TrainingState* state) {
  return serialize(model, state).buffer();
}

void save_checkpoint(const std::string& path, const OperatorModel& model, const TrainingState* state) {
  serialize(model, state).save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r = Reader::open(path);
  r.header(detail::kKindCheckpoint, "checkpoint");
  ModelConfig cfg = read_config(r);
  Checkpoint ck;
  try {
    ck.model = std::make_unique<OperatorModel>(cfg);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  }

  std::map<std::string, Tensor*> slots;
  for (auto& [name, t] : ck.model->named_tensors()) slots[name] = t;
  const auto count = r.get<std::uint32_t>();
  if (count != slots.size()) throw FormatError("checkpoint tensor count does not match its config");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    Blob b = read_blob(r, name);
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError("checkpoint has unknown tensor '" + name + "'");
    Tensor& t = *it->second;
    if (b.shape != t.shape()) throw FormatError("checkpoint tensor '" + name + "' has the wrong shape");
    std::copy(b.data.begin(), b.data.end(), t.mutable_data().begin());
    slots.erase(it);
  }

  if (r.get<std::uint8_t>() != 0) {
    TrainingState st;
    st.step = r.get<std::uint64_t>();
    st.total_steps = r.get<std::uint64_t>();
    st.epoch = r.get<std::uint64_t>();
    st.best_metric = r.get<double>();
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name;
      st.adam_m.push_back(read_blob(r, name).data);
      st.adam_v.push_back(read_blob(r, name).data);
    }
    ck.state = std::move(st);
  }
  r.expect_end();
  return ck;
}

}  // namespace gtno
