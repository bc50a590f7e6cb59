#include "gtno/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gtno/errors.hpp"

namespace gtno {

namespace {

struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  return out;
}

template <class U>
U to_unsigned(const std::string& key, const std::string& v) {
  U out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::map<std::string, Field> fields(RunConfig& c) {
  std::map<std::string, Field> f;
  auto real = [&f](const std::string& k, double& x) {
    f[k] = {[&x, k](const std::string& v) { x = to_double(k, v); }, [&x] { return fmt(x); }};
  };
  auto u32 = [&f](const std::string& k, std::uint32_t& x) {
    f[k] = {[&x, k](const std::string& v) { x = to_unsigned<std::uint32_t>(k, v); }, [&x] { return std::to_string(x); }};
  };
  auto u64 = [&f](const std::string& k, std::uint64_t& x) {
    f[k] = {[&x, k](const std::string& v) { x = to_unsigned<std::uint64_t>(k, v); }, [&x] { return std::to_string(x); }};
  };
  auto flag = [&f](const std::string& k, bool& x) {
    f[k] = {[&x, k](const std::string& v) { x = to_bool(k, v); }, [&x] { return std::string(x ? "true" : "false"); }};
  };
  auto text = [&f](const std::string& k, std::string& x) {
    f[k] = {[&x](const std::string& v) { x = v; }, [&x] { return x; }};
  };

  ModelConfig& m = c.model;
  u32("d_model", m.d_model);
  u32("n_gt_blocks", m.n_gt_blocks);
  u32("n_heads", m.n_heads);
  u32("d_dec", m.d_dec);
  u32("n_out_mlp_layers", m.n_out_mlp_layers);
  u32("n_prop_mlp_layers", m.n_prop_mlp_layers);
  u32("cross_heads", m.cross_heads);
  u32("gf_dim", m.gf_dim);
  real("gf_sigma", m.gf_sigma);
  real("rope_base", m.rope_base);
  real("rope_scale", m.rope_scale);
  f["pos_enc"] = {[&m](const std::string& v) { m.pos_enc = parse_pos_encoding(v); },
                  [&m] { return to_string(m.pos_enc); }};
  f["graph"] = {[&m](const std::string& v) { m.graph_kind = parse_graph_kind(v); },
                [&m] { return to_string(m.graph_kind); }};
  real("radius", m.radius);
  u32("knn_k", m.knn_k);
  flag("attn_avg", m.attn_avg);
  real("ln_eps", m.ln_eps);
  u64("model_seed", m.seed);

  TrainConfig& t = c.train;
  f["loss"] = {[&t](const std::string& v) { t.loss = parse_loss_kind(v); }, [&t] { return to_string(t.loss); }};
  real("lr_init", t.lr_init);
  u32("epochs", t.epochs);
  u32("batch_size", t.batch_size);
  real("div_factor", t.onecycle.div_factor);
  real("pct_start", t.onecycle.pct_start);
  real("final_div_factor", t.onecycle.final_div_factor);
  real("adam_beta1", t.adam.beta1);
  real("adam_beta2", t.adam.beta2);
  real("adam_eps", t.adam.eps);
  real("clip_norm", t.clip_norm);
  real("target_nrmse", t.target_nrmse);
  u64("seed", t.seed);

  text("train_data", c.train_data);
  text("test_data", c.test_data);
  text("out_dir", c.out_dir);
  flag("normalize", c.normalize);
  return f;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto f = fields(*this);
  auto it = f.find(key);
  if (it == f.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(value);
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::to_text() const {
  RunConfig copy = *this;
  std::string out;
  for (const auto& [k, field] : fields(copy)) out += k + " = " + field.get() + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> RunConfig::keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const auto& [k, field] : fields(c)) out.push_back(k);
  return out;
}

}  // namespace gtno
