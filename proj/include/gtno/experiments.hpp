#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gtno/model.hpp"
#include "gtno/pde_data.hpp"
#include "gtno/run_config.hpp"
#include "gtno/training.hpp"

namespace gtno {

/// Copies the architecture from `base` and takes channels, dimension and
/// decoder mode from the dataset.
ModelConfig resolve_model_config(const ModelConfig& base, const DatasetHeader& h);

struct RunOutcome {
  std::unique_ptr<OperatorModel> model;
  TrainHistory history;
  EvalResult test;
};

/// Builds a model for the data, fits normalization (when enabled), trains
/// and evaluates on `test`. An empty test set evaluates on the training set.
RunOutcome run_experiment(const RunConfig& rc, const Dataset& train_data, const Dataset& test_data,
                          const std::function<void(const EpochRecord&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// The constant field c minimizing mean_n ||c - u_n|| / ||u_n|| over the
/// samples (weighted geometric median, Weiszfeld iterations).
std::vector<double> best_constant_field(const Dataset& data);
double constant_baseline_nrmse(const Dataset& data);
/// Predicts each test target by the target of the training sample whose
/// input field is closest in L2.
double nearest_neighbor_baseline_nrmse(const Dataset& train_data, const Dataset& test_data);

// ---------------------------------------------------------------------------
// Discretization invariance
// ---------------------------------------------------------------------------

struct InvarianceRow {
  std::size_t nx = 0, ny = 0, points = 0;
  double nrmse = 0.0;
  double rmse = 0.0;
  /// Empirical maximum offset: the largest per-sample relative L2 error.
  double r_k = 0.0;
};

/// Throws ConfigError unless the datasets describe the same fields (kind,
/// seed, sample count, parameters, bounds) at non-decreasing resolution.
void check_resolution_family(const std::vector<Dataset>& family);

std::vector<InvarianceRow> invariance_sweep(const OperatorModel& model, const std::vector<Dataset>& family);

void write_invariance_csv(const std::string& path, const std::vector<InvarianceRow>& rows, const std::string& header_comment);

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

enum class AblationKind { radius, knn, pos_enc, data_size };
AblationKind parse_ablation_kind(const std::string& s);
std::string to_string(AblationKind k);
std::vector<std::string> default_ablation_values(AblationKind k);

struct AblationRow {
  std::string factor;
  std::string value;
  std::string config_hash;
  double nrmse = 0.0;
  double rmse = 0.0;
  std::size_t edges = 0;
  double seconds = 0.0;
};

/// One training run per value, all sharing the data split and seeds.
std::vector<AblationRow> run_ablation(AblationKind kind, const std::vector<std::string>& values, const RunConfig& base,
                                      const Dataset& train_data, const Dataset& test_data,
                                      const std::function<void(const AblationRow&)>& on_row = {});

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows, const std::string& header_comment);

}  // namespace gtno
