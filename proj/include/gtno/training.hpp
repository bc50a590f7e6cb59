#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gtno/checkpoint.hpp"
#include "gtno/model.hpp"
#include "gtno/pde_data.hpp"

namespace gtno {

// ---------------------------------------------------------------------------
// Losses (tape-aware) and metrics (plain values)
// ---------------------------------------------------------------------------

enum class LossKind : std::uint8_t { mse = 0, rel_l2 = 1 };
std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

/// Mean squared error over all elements.
Tensor mse_loss(const Tensor& pred, const Tensor& target);
/// ||pred - target|| / ||target|| of one sample.
Tensor rel_l2_loss(const Tensor& pred, const Tensor& target);
/// Per-sample ratio averaged over the batch.
Tensor rel_l2_loss(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets);

/// Relative L2 error of one flattened sample. Throws ZeroTargetError.
double relative_l2(std::span<const double> pred, std::span<const double> target);
/// Mean over samples of the per-sample relative L2 error.
double nrmse(const std::vector<std::vector<double>>& preds, const std::vector<std::vector<double>>& targets);
/// sqrt of the mean squared error over every element of every sample.
double rmse(const std::vector<std::vector<double>>& preds, const std::vector<std::vector<double>>& targets);

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

struct OneCycleConfig {
  double div_factor = 20.0;
  double pct_start = 0.05;
  double final_div_factor = 1000.0;
};

/// Cosine one-cycle: lr_init/div_factor at step 0, lr_init at
/// round(pct_start * total), lr_init/final_div_factor at total-1.
double onecycle_lr(std::uint64_t step, std::uint64_t total_steps, double lr_init, const OneCycleConfig& cfg);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m, v;
};

/// Bias-corrected Adam update of every parameter from its accumulated grad
/// (a missing grad counts as zero).
void adam_step(const std::vector<Tensor*>& params, AdamState& state, double lr, const AdamConfig& cfg);

/// Scales all grads so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(const std::vector<Tensor*>& params, double max_norm);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  LossKind loss = LossKind::mse;
  double lr_init = 1e-4;
  std::uint32_t epochs = 10;
  std::uint32_t batch_size = 4;
  OneCycleConfig onecycle;
  AdamConfig adam;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;
  /// Stop once the eval nRMSE drops below this value (0 disables).
  double target_nrmse = 0.0;

  void validate() const;
};

/// A sample with its discretizations prepared for a specific model.
struct PreparedSample {
  Tensor theta;
  std::vector<Tensor> target;
  InputContext input;
  QueryContext query;
};

/// Builds graphs and query encodings for every sample. The query points
/// default to each sample's own points.
std::vector<PreparedSample> prepare_samples(const OperatorModel& model, const Dataset& data);

struct EpochRecord {
  std::uint32_t epoch = 0;
  double train_loss = 0.0;
  double eval_nrmse = 0.0;
  double eval_rmse = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::uint32_t best_epoch = 0;
  double best_nrmse = 0.0;
  bool early_stopped = false;

  void write_csv(const std::string& path) const;
};

struct EvalResult {
  double nrmse = 0.0;
  double rmse = 0.0;
  std::vector<double> per_sample;  // relative L2 per sample
};

/// Flattened prediction of one sample (frames concatenated).
std::vector<double> predict_flat(const OperatorModel& model, const PreparedSample& s);
std::vector<double> target_flat(const PreparedSample& s);
EvalResult evaluate(const OperatorModel& model, const std::vector<PreparedSample>& samples);

/// Loss of one sample on the active tape. MSE is measured after dividing
/// each output channel by the model's output scale.
Tensor sample_loss(const OperatorModel& model, const PreparedSample& s, LossKind kind);

/// Seeded mini-batch training. Evaluates on eval_set (train_set when empty)
/// after every epoch and leaves the model at the best eval nRMSE. When
/// `state` holds a previous run's TrainingState, training resumes from it;
/// on return it holds the final state. A NumericFault restores the best
/// weights before propagating.
TrainHistory train(OperatorModel& model, const std::vector<PreparedSample>& train_set,
                   const std::vector<PreparedSample>& eval_set, const TrainConfig& cfg,
                   TrainingState* state = nullptr, const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Per-channel mean and standard deviation of theta and targets, used to set
/// the model's normalization.
void fit_normalization(OperatorModel& model, const Dataset& data);

}  // namespace gtno
