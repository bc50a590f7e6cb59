#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gtno/errors.hpp"
#include "gtno/experiments.hpp"
#include "gtno/training.hpp"
#include "helpers.hpp"

using namespace gtno;

namespace {

Dataset tiny_darcy(std::size_t count, std::uint64_t seed, std::size_t grid = 8) {
  GenOptions g;
  g.count = count;
  g.nx = g.ny = grid;
  g.seed = seed;
  return generate_dataset(g);
}

ModelConfig tiny_model(const Dataset& d) {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.cross_heads = 2;
  c.d_dec = 8;
  c.n_gt_blocks = 1;
  c.radius = 0.3;
  return resolve_model_config(c, d.header);
}

struct Stop {};

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("one-cycle endpoints and shape") {
    OneCycleConfig c;
    const double lr = 1e-3;
    const std::uint64_t total = 200;
    CHECK(onecycle_lr(0, total, lr, c) == doctest::Approx(lr / 20.0).epsilon(1e-12));
    CHECK(onecycle_lr(10, total, lr, c) == doctest::Approx(lr).epsilon(1e-12));
    CHECK(onecycle_lr(total - 1, total, lr, c) == doctest::Approx(lr / 1000.0).epsilon(1e-12));
    // Cosine warmup midpoint.
    CHECK(onecycle_lr(5, total, lr, c) == doctest::Approx(0.5 * (lr + lr / 20.0)).epsilon(1e-12));
    for (std::uint64_t s = 1; s <= 10; ++s) CHECK(onecycle_lr(s, total, lr, c) > onecycle_lr(s - 1, total, lr, c));
    for (std::uint64_t s = 11; s < total; ++s) CHECK(onecycle_lr(s, total, lr, c) < onecycle_lr(s - 1, total, lr, c));
  }

  TEST_CASE("adam matches a hand-computed first step") {
    Tensor p = Tensor::from({2}, {1.0, -1.0}, true);
    p.mutable_grad()[0] = 0.5;
    p.mutable_grad()[1] = -2.0;
    AdamState st;
    adam_step({&p}, st, 0.1, {});
    // With bias correction the first step is lr * g / (|g| + eps').
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(p[1] == doctest::Approx(-0.9).epsilon(1e-7));
    CHECK(st.t == 1);
  }

  TEST_CASE("clip_grad_norm scales to the limit") {
    Tensor a = Tensor::from({2}, {0, 0}, true), b = Tensor::from({1}, {0}, true);
    a.mutable_grad()[0] = 3.0;
    b.mutable_grad()[0] = 4.0;
    CHECK(clip_grad_norm({&a, &b}, 1.0) == doctest::Approx(5.0));
    CHECK(a.grad()[0] == doctest::Approx(0.6));
    CHECK(b.grad()[0] == doctest::Approx(0.8));
    CHECK(clip_grad_norm({&a, &b}, 10.0) == doctest::Approx(1.0));
    CHECK(a.grad()[0] == doctest::Approx(0.6));
  }

  TEST_CASE("metrics") {
    const std::vector<double> t{3, 4}, p{3, 5};
    CHECK(relative_l2(p, t) == doctest::Approx(0.2));
    CHECK_THROWS_AS(relative_l2(p, std::vector<double>{0, 0}), ZeroTargetError);
    CHECK(nrmse({p, t}, {t, t}) == doctest::Approx(0.1));
    CHECK(rmse({p}, {t}) == doctest::Approx(std::sqrt(0.5)));
    Tensor a = Tensor::from({2}, {1, 2}), b = Tensor::from({2}, {1, 4});
    CHECK(mse_loss(a, b).item() == doctest::Approx(2.0));
    CHECK(rel_l2_loss(a, b).item() == doctest::Approx(2.0 / std::sqrt(17.0)));
    CHECK(parse_loss_kind("rel_l2") == LossKind::rel_l2);
  }

  TEST_CASE("config validation") {
    TrainConfig c;
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.onecycle.pct_start = 1.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("normalization statistics") {
    Dataset d = tiny_darcy(3, 1);
    OperatorModel m(tiny_model(d));
    fit_normalization(m, d);
    double s = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (const Sample& smp : d.samples)
      for (double v : smp.target[0].data()) {
        s += v;
        ss += v * v;
        ++n;
      }
    const double mean = s / n;
    CHECK(m.out_mean[0] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(m.out_std[0] == doctest::Approx(std::sqrt(ss / n - mean * mean)).epsilon(1e-9));
  }

  TEST_CASE("training reduces the loss and keeps the best epoch") {
    Dataset d = tiny_darcy(4, 3);
    OperatorModel m(tiny_model(d));
    fit_normalization(m, d);
    auto set = prepare_samples(m, d);
    TrainConfig cfg;
    cfg.lr_init = 3e-3;
    cfg.epochs = 15;
    cfg.batch_size = 2;
    const double before = evaluate(m, set).nrmse;
    TrainHistory h = train(m, set, {}, cfg);
    CHECK(h.epochs.size() == 15);
    CHECK(h.best_nrmse < before);
    CHECK(evaluate(m, set).nrmse == doctest::Approx(h.best_nrmse).epsilon(1e-14));
  }

  TEST_CASE("an interrupted run resumes onto the same trajectory") {
    Dataset d = tiny_darcy(5, 8);
    TrainConfig cfg;
    cfg.lr_init = 2e-3;
    cfg.epochs = 4;
    cfg.batch_size = 2;

    OperatorModel straight(tiny_model(d));
    fit_normalization(straight, d);
    auto set = prepare_samples(straight, d);
    TrainingState full;
    TrainHistory hs = train(straight, set, {}, cfg, &full);

    OperatorModel resumed(tiny_model(d));
    fit_normalization(resumed, d);
    TrainingState part;
    CHECK_THROWS_AS(train(resumed, set, {}, cfg, &part,
                          [](const EpochRecord& r) {
                            if (r.epoch == 2) throw Stop{};
                          }),
                    Stop);
    CHECK(part.epoch == 2);
    TrainHistory hr = train(resumed, set, {}, cfg, &part);
    REQUIRE(hr.epochs.size() == 2);
    CHECK(part == full);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(hr.epochs[k].train_loss == hs.epochs[k + 2].train_loss);
      CHECK(hr.epochs[k].lr == hs.epochs[k + 2].lr);
    }
    cfg.epochs = 5;
    CHECK_THROWS_AS(train(resumed, set, {}, cfg, &part), ConfigError);
  }

  TEST_CASE("baselines") {
    Dataset d = tiny_darcy(6, 11);
    const auto c = best_constant_field(d);
    // The geometric median is no worse than the plain mean.
    std::vector<double> mean(c.size(), 0.0);
    for (const Sample& s : d.samples)
      for (std::size_t k = 0; k < c.size(); ++k) mean[k] += s.target[0][k] / 6.0;
    auto score = [&](const std::vector<double>& f) {
      double t = 0.0;
      for (const Sample& s : d.samples) t += relative_l2(f, s.target[0].data());
      return t / 6.0;
    };
    CHECK(score(c) <= score(mean) + 1e-12);
    CHECK(constant_baseline_nrmse(d) == doctest::Approx(score(c)));
    // A test set equal to the training set is matched exactly.
    CHECK(nearest_neighbor_baseline_nrmse(d, d) == 0.0);
  }
}
