#include "gtno/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "gtno/errors.hpp"

namespace gtno {

std::string to_string(LossKind k) { return k == LossKind::mse ? "mse" : "rel_l2"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "rel_l2" || s == "rel-l2") return LossKind::rel_l2;
  throw ConfigError("unknown loss kind '" + s + "'");
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw ShapeError("mse_loss: shape mismatch");
  Tensor d = sub(pred, target);
  return mean(mul(d, d));
}

Tensor rel_l2_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw ShapeError("rel_l2_loss: shape mismatch");
  double tt = 0.0;
  for (double v : target.data()) tt += v * v;
  if (!(tt > 0.0)) throw ZeroTargetError("relative L2 loss with an all-zero target");
  Tensor d = sub(pred, target);
  return scale(sqrt(sum(mul(d, d))), 1.0 / std::sqrt(tt));
}

Tensor rel_l2_loss(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets) {
  if (preds.size() != targets.size() || preds.empty()) throw ShapeError("rel_l2_loss: batch size mismatch");
  Tensor total = rel_l2_loss(preds[0], targets[0]);
  for (std::size_t i = 1; i < preds.size(); ++i) total = add(total, rel_l2_loss(preds[i], targets[i]));
  return scale(total, 1.0 / static_cast<double>(preds.size()));
}

double relative_l2(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw ShapeError("relative_l2: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    num += d * d;
    den += target[i] * target[i];
  }
  if (!(den > 0.0)) throw ZeroTargetError("nRMSE of an all-zero target");
  return std::sqrt(num / den);
}

double nrmse(const std::vector<std::vector<double>>& preds, const std::vector<std::vector<double>>& targets) {
  if (preds.size() != targets.size() || preds.empty()) throw ShapeError("nrmse: sample count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += relative_l2(preds[i], targets[i]);
  return s / static_cast<double>(preds.size());
}

double rmse(const std::vector<std::vector<double>>& preds, const std::vector<std::vector<double>>& targets) {
  if (preds.size() != targets.size() || preds.empty()) throw ShapeError("rmse: sample count mismatch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != targets[i].size()) throw ShapeError("rmse: size mismatch");
    for (std::size_t k = 0; k < preds[i].size(); ++k) {
      const double d = preds[i][k] - targets[i][k];
      s += d * d;
    }
    n += preds[i].size();
  }
  return std::sqrt(s / static_cast<double>(n));
}

double onecycle_lr(std::uint64_t step, std::uint64_t total, double lr_init, const OneCycleConfig& cfg) {
  if (total == 0 || step >= total) throw ConfigError("onecycle_lr: step out of range");
  const double lo = lr_init / cfg.div_factor;
  const double end = lr_init / cfg.final_div_factor;
  if (total == 1) return lo;
  const auto peak = std::clamp<std::uint64_t>(
      static_cast<std::uint64_t>(std::llround(cfg.pct_start * static_cast<double>(total))), 1, total - 1);
  auto cosine = [](double from, double to, double frac) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::acos(-1.0) * frac));
  };
  if (step <= peak) return cosine(lo, lr_init, static_cast<double>(step) / static_cast<double>(peak));
  return cosine(lr_init, end, static_cast<double>(step - peak) / static_cast<double>(total - 1 - peak));
}

void adam_step(const std::vector<Tensor*>& params, AdamState& st, double lr, const AdamConfig& cfg) {
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), {});
    st.v.assign(params.size(), {});
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    if (m.size() != p.numel()) {
      m.assign(p.numel(), 0.0);
      v.assign(p.numel(), 0.0);
    }
    auto data = p.mutable_data();
    const auto g = p.grad();
    for (std::size_t k = 0; k < p.numel(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      data[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.eps);
    }
  }
}

double clip_grad_norm(const std::vector<Tensor*>& params, double max_norm) {
  double ss = 0.0;
  for (Tensor* p : params)
    for (double g : p->grad()) ss += g * g;
  const double norm = std::sqrt(ss);
  if (norm > max_norm && max_norm > 0.0) {
    const double f = max_norm / norm;
    for (Tensor* p : params) {
      if (!p->has_grad()) continue;
      for (double& g : p->mutable_grad()) g *= f;
    }
  }
  return norm;
}

void TrainConfig::validate() const {
  if (!(lr_init > 0.0)) throw ConfigError("lr_init must be positive");
  if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
  if (!(onecycle.pct_start > 0.0 && onecycle.pct_start < 1.0)) throw ConfigError("pct_start must lie in (0,1)");
  if (!(onecycle.div_factor > 0.0) || !(onecycle.final_div_factor > 0.0)) throw ConfigError("div factors must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ConfigError("invalid Adam parameters");
  }
  if (clip_norm < 0.0 || target_nrmse < 0.0) throw ConfigError("clip_norm and target_nrmse must be non-negative");
}

std::vector<PreparedSample> prepare_samples(const OperatorModel& model, const Dataset& data) {
  const ModelConfig& c = model.config();
  if (data.header.in_channels != c.in_channels || data.header.out_channels != c.out_channels ||
      data.header.bounds.size() != c.spatial_dims) {
    throw ConfigError("dataset channels or dimension do not match the model");
  }
  if (c.mode == DecoderMode::rollout && data.header.frames() != c.rollout_steps) {
    throw ConfigError("dataset has " + std::to_string(data.header.frames()) + " target frames, model rolls out " +
                      std::to_string(c.rollout_steps));
  }
  if (c.mode == DecoderMode::steady && data.header.t_out != 0) throw ConfigError("steady model on a time-series dataset");
  std::vector<PreparedSample> out;
  out.reserve(data.size());
  std::optional<InputContext> shared_in;
  std::optional<QueryContext> shared_q;
  if (data.shared_points) {
    shared_in = model.prepare_input(*data.shared_points);
    shared_q = model.prepare_query(*data.shared_points);
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample& s = data.samples[i];
    PreparedSample p;
    p.theta = s.theta;
    p.target = s.target;
    if (s.points) {
      p.input = model.prepare_input(*s.points);
      p.query = model.prepare_query(*s.points);
    } else {
      p.input = *shared_in;
      p.query = *shared_q;
    }
    out.push_back(std::move(p));
  }
  return out;
}

void TrainHistory::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "epoch,train_loss,eval_nrmse,eval_rmse,lr,seconds\n";
  char buf[256];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%u,%.17g,%.17g,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss, e.eval_nrmse,
                  e.eval_rmse, e.lr, e.seconds);
    out << buf;
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::vector<double> predict_flat(const OperatorModel& model, const PreparedSample& s) {
  Prediction p = model.forward(s.theta, s.input, s.query);
  std::vector<double> out;
  for (const Tensor& f : p.frames) out.insert(out.end(), f.data().begin(), f.data().end());
  return out;
}

std::vector<double> target_flat(const PreparedSample& s) {
  std::vector<double> out;
  for (const Tensor& f : s.target) out.insert(out.end(), f.data().begin(), f.data().end());
  return out;
}

EvalResult evaluate(const OperatorModel& model, const std::vector<PreparedSample>& samples) {
  std::vector<std::vector<double>> preds, targets;
  EvalResult r;
  for (const auto& s : samples) {
    preds.push_back(predict_flat(model, s));
    targets.push_back(target_flat(s));
    r.per_sample.push_back(relative_l2(preds.back(), targets.back()));
  }
  r.nrmse = nrmse(preds, targets);
  r.rmse = rmse(preds, targets);
  return r;
}

Tensor sample_loss(const OperatorModel& model, const PreparedSample& s, LossKind kind) {
  Prediction p = model.forward(s.theta, s.input, s.query);
  if (p.frames.size() != s.target.size()) throw ShapeError("prediction and target frame counts differ");
  if (kind == LossKind::rel_l2) {
    if (p.frames.size() == 1) return rel_l2_loss(p.frames[0], s.target[0]);
    std::vector<Tensor> pf(p.frames), tf(s.target);
    return rel_l2_loss(concat_cols(pf), concat_cols(tf));
  }
  std::vector<double> inv(model.out_std.numel());
  for (std::size_t c = 0; c < inv.size(); ++c) inv[c] = 1.0 / model.out_std[c];
  const std::size_t channels = inv.size();
  const Tensor inv_std = Tensor::from({channels}, std::move(inv));
  Tensor total;
  for (std::size_t f = 0; f < p.frames.size(); ++f) {
    Tensor l = mse_loss(mul_row(p.frames[f], inv_std), mul_row(s.target[f], inv_std));
    total = f == 0 ? l : add(total, l);
  }
  return total;
}

namespace {

std::vector<std::vector<double>> snapshot(const std::vector<Tensor*>& params) {
  std::vector<std::vector<double>> out;
  for (Tensor* p : params) out.emplace_back(p->data().begin(), p->data().end());
  return out;
}

void restore(const std::vector<Tensor*>& params, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) std::copy(snap[i].begin(), snap[i].end(), params[i]->mutable_data().begin());
}

}  // namespace

TrainHistory train(OperatorModel& model, const std::vector<PreparedSample>& train_set,
                   const std::vector<PreparedSample>& eval_set, const TrainConfig& cfg, TrainingState* state,
                   const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  const auto& evals = eval_set.empty() ? train_set : eval_set;
  const std::vector<Tensor*> params = model.parameters();
  const std::size_t n = train_set.size();
  const std::uint64_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t total = per_epoch * cfg.epochs;

  AdamState adam;
  std::uint64_t step = 0, first_epoch = 0;
  TrainHistory hist;
  hist.best_nrmse = std::numeric_limits<double>::infinity();
  if (state && state->total_steps != 0) {
    if (state->total_steps != total) throw ConfigError("resumed run has a different schedule length");
    step = state->step;
    first_epoch = state->epoch;
    adam.t = state->step;
    adam.m = state->adam_m;
    adam.v = state->adam_v;
    hist.best_nrmse = state->best_metric;
  }
  auto best = snapshot(params);

  std::vector<std::size_t> order(n);
  try {
    for (std::uint64_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      std::iota(order.begin(), order.end(), 0);
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                        static_cast<std::uint32_t>(epoch)};
      std::mt19937_64 rng(seq);
      std::shuffle(order.begin(), order.end(), rng);

      double loss_sum = 0.0, lr = 0.0;
      for (std::size_t b = 0; b < n; b += cfg.batch_size) {
        for (Tensor* p : params) p->zero_grad();
        for (std::size_t k = b; k < std::min(n, b + cfg.batch_size); ++k) {
          Tape tape;
          TapeScope scope(tape);
          Tensor l = sample_loss(model, train_set[order[k]], cfg.loss);
          tape.backward(l);
          loss_sum += l.item();
        }
        if (cfg.clip_norm > 0.0) clip_grad_norm(params, cfg.clip_norm);
        lr = onecycle_lr(step, total, cfg.lr_init, cfg.onecycle);
        adam_step(params, adam, lr, cfg.adam);
        ++step;
      }
      for (Tensor* p : params) p->zero_grad();

      const EvalResult ev = evaluate(model, evals);
      EpochRecord rec;
      rec.epoch = static_cast<std::uint32_t>(epoch + 1);
      rec.train_loss = loss_sum / static_cast<double>(n);
      rec.eval_nrmse = ev.nrmse;
      rec.eval_rmse = ev.rmse;
      rec.lr = lr;
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      hist.epochs.push_back(rec);
      if (ev.nrmse < hist.best_nrmse) {
        hist.best_nrmse = ev.nrmse;
        hist.best_epoch = rec.epoch;
        best = snapshot(params);
      }
      if (state) {
        state->step = step;
        state->total_steps = total;
        state->epoch = epoch + 1;
        state->best_metric = hist.best_nrmse;
        state->adam_m = adam.m;
        state->adam_v = adam.v;
      }
      if (on_epoch) on_epoch(rec);
      if (cfg.target_nrmse > 0.0 && ev.nrmse < cfg.target_nrmse) {
        hist.early_stopped = true;
        break;
      }
    }
  } catch (const NumericFault&) {
    restore(params, best);
    throw;
  }
  restore(params, best);
  return hist;
}

void fit_normalization(OperatorModel& model, const Dataset& data) {
  const std::size_t cin = data.header.in_channels, cout = data.header.out_channels;
  auto stats = [](std::size_t channels, auto&& visit) {
    std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
    std::size_t count = 0;
    visit([&](const Tensor& t) {
      const std::size_t rows = t.numel() / channels;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < channels; ++c) sum[c] += t[r * channels + c];
      count += rows;
    });
    std::vector<double> mean(channels), sd(channels);
    for (std::size_t c = 0; c < channels; ++c) mean[c] = count ? sum[c] / static_cast<double>(count) : 0.0;
    visit([&](const Tensor& t) {
      const std::size_t rows = t.numel() / channels;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < channels; ++c) {
          const double d = t[r * channels + c] - mean[c];
          sq[c] += d * d;
        }
    });
    for (std::size_t c = 0; c < channels; ++c) {
      sd[c] = count ? std::sqrt(sq[c] / static_cast<double>(count)) : 1.0;
      if (!(sd[c] > 1e-12)) sd[c] = 1.0;
    }
    return std::make_pair(mean, sd);
  };
  auto [im, is] = stats(cin, [&](auto&& f) {
    for (const auto& s : data.samples) f(s.theta);
  });
  auto [om, os] = stats(cout, [&](auto&& f) {
    for (const auto& s : data.samples)
      for (const auto& t : s.target) f(t);
  });
  model.set_normalization(im, is, om, os);
}

}  // namespace gtno
