#include "gtno/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "gtno/errors.hpp"

namespace gtno {

ModelConfig resolve_model_config(const ModelConfig& base, const DatasetHeader& h) {
  ModelConfig c = base;
  c.in_channels = h.in_channels;
  c.out_channels = h.out_channels;
  c.spatial_dims = static_cast<std::uint32_t>(h.bounds.size());
  if (h.t_out == 0) {
    c.mode = DecoderMode::steady;
    c.rollout_steps = 1;
  } else {
    c.mode = DecoderMode::rollout;
    c.rollout_steps = h.t_out;
  }
  return c;
}

RunOutcome run_experiment(const RunConfig& rc, const Dataset& train_data, const Dataset& test_data,
                          const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train_data.size() == 0) throw ConfigError("training set is empty");
  RunOutcome out;
  out.model = std::make_unique<OperatorModel>(resolve_model_config(rc.model, train_data.header));
  if (rc.normalize) fit_normalization(*out.model, train_data);
  const auto train_set = prepare_samples(*out.model, train_data);
  const auto test_set = test_data.size() ? prepare_samples(*out.model, test_data) : std::vector<PreparedSample>{};
  out.history = train(*out.model, train_set, test_set, rc.train, nullptr, on_epoch);
  out.test = evaluate(*out.model, test_set.empty() ? train_set : test_set);
  return out;
}

namespace {

std::vector<double> flat_target(const Sample& s) {
  std::vector<double> out;
  for (const Tensor& t : s.target) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::vector<double> best_constant_field(const Dataset& data) {
  if (data.size() == 0) throw ConfigError("baseline needs at least one sample");
  std::vector<std::vector<double>> u;
  std::vector<double> w;
  for (const Sample& s : data.samples) {
    u.push_back(flat_target(s));
    const double n = norm(u.back());
    if (!(n > 0.0)) throw ZeroTargetError("baseline on an all-zero target");
    w.push_back(1.0 / n);
  }
  const std::size_t dim = u[0].size();
  // Weighted mean as the starting point.
  std::vector<double> c(dim, 0.0);
  double wsum = 0.0;
  for (std::size_t n = 0; n < u.size(); ++n) {
    wsum += w[n];
    for (std::size_t k = 0; k < dim; ++k) c[k] += w[n] * u[n][k];
  }
  for (double& x : c) x /= wsum;

  std::vector<double> next(dim);
  for (int it = 0; it < 1000; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    double denom = 0.0;
    bool at_sample = false;
    for (std::size_t n = 0; n < u.size(); ++n) {
      double d = 0.0;
      for (std::size_t k = 0; k < dim; ++k) d += (c[k] - u[n][k]) * (c[k] - u[n][k]);
      d = std::sqrt(d);
      if (d < 1e-15) {
        at_sample = true;
        continue;
      }
      const double a = w[n] / d;
      denom += a;
      for (std::size_t k = 0; k < dim; ++k) next[k] += a * u[n][k];
    }
    if (denom == 0.0) break;
    double shift = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      next[k] /= denom;
      shift = std::max(shift, std::abs(next[k] - c[k]));
    }
    c.swap(next);
    if (shift < 1e-14 || at_sample) break;
  }
  return c;
}

double constant_baseline_nrmse(const Dataset& data) {
  const std::vector<double> c = best_constant_field(data);
  double s = 0.0;
  for (const Sample& smp : data.samples) s += relative_l2(c, flat_target(smp));
  return s / static_cast<double>(data.size());
}

double nearest_neighbor_baseline_nrmse(const Dataset& train_data, const Dataset& test_data) {
  if (train_data.size() == 0 || test_data.size() == 0) throw ConfigError("baseline needs non-empty splits");
  if (train_data.header.points != test_data.header.points || train_data.header.in_channels != test_data.header.in_channels) {
    throw ConfigError("nearest-neighbour baseline needs matching discretizations");
  }
  double s = 0.0;
  for (const Sample& q : test_data.samples) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < train_data.size(); ++n) {
      const auto a = train_data.samples[n].theta.data(), b = q.theta.data();
      double d = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
      if (d < best_d) {
        best_d = d;
        best = n;
      }
    }
    s += relative_l2(flat_target(train_data.samples[best]), flat_target(q));
  }
  return s / static_cast<double>(test_data.size());
}

void check_resolution_family(const std::vector<Dataset>& family) {
  if (family.empty()) throw ConfigError("invariance needs at least one dataset");
  const DatasetHeader& h0 = family[0].header;
  for (std::size_t i = 0; i < family.size(); ++i) {
    const DatasetHeader& h = family[i].header;
    if (h.kind != h0.kind || h.seed != h0.seed || h.params != h0.params || h.bounds != h0.bounds ||
        h.in_channels != h0.in_channels || h.out_channels != h0.out_channels || h.t_in != h0.t_in ||
        h.t_out != h0.t_out || family[i].size() != family[0].size()) {
      throw ConfigError("dataset " + std::to_string(i) + " does not describe the same fields as dataset 0");
    }
    if (h.nx == 0 || h.ny == 0) throw ConfigError("invariance needs grid datasets");
    if (i > 0) {
      const DatasetHeader& p = family[i - 1].header;
      if (h.nx < p.nx || h.ny < p.ny) throw ConfigError("resolutions must be listed coarse to fine");
    }
  }
}

std::vector<InvarianceRow> invariance_sweep(const OperatorModel& model, const std::vector<Dataset>& family) {
  check_resolution_family(family);
  std::vector<InvarianceRow> rows;
  for (const Dataset& d : family) {
    const auto samples = prepare_samples(model, d);
    const EvalResult ev = evaluate(model, samples);
    InvarianceRow r;
    r.nx = d.header.nx;
    r.ny = d.header.ny;
    r.points = d.header.points;
    r.nrmse = ev.nrmse;
    r.rmse = ev.rmse;
    for (double e : ev.per_sample) r.r_k = std::max(r.r_k, e);
    rows.push_back(r);
  }
  return rows;
}

namespace {

std::ofstream open_csv(const std::string& path, const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  std::istringstream lines(header_comment);
  std::string line;
  while (std::getline(lines, line)) out << "# " << line << "\n";
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void write_invariance_csv(const std::string& path, const std::vector<InvarianceRow>& rows, const std::string& header_comment) {
  auto out = open_csv(path, header_comment);
  out << "nx,ny,points,nrmse,rmse,r_k\n";
  for (const auto& r : rows) {
    out << r.nx << "," << r.ny << "," << r.points << "," << num(r.nrmse) << "," << num(r.rmse) << "," << num(r.r_k)
        << "\n";
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

AblationKind parse_ablation_kind(const std::string& s) {
  if (s == "radius") return AblationKind::radius;
  if (s == "knn") return AblationKind::knn;
  if (s == "pos_enc" || s == "pos-enc") return AblationKind::pos_enc;
  if (s == "data_size" || s == "data-size") return AblationKind::data_size;
  throw ConfigError("unknown ablation '" + s + "'");
}

std::string to_string(AblationKind k) {
  switch (k) {
    case AblationKind::radius: return "radius";
    case AblationKind::knn: return "knn";
    case AblationKind::pos_enc: return "pos_enc";
    case AblationKind::data_size: return "data_size";
  }
  return "?";
}

std::vector<std::string> default_ablation_values(AblationKind k) {
  switch (k) {
    case AblationKind::radius: return {"0.04", "0.08", "0.12", "0.16"};
    case AblationKind::knn: return {"4", "8", "16"};
    case AblationKind::pos_enc: return {"none", "concat-coords", "rope"};
    case AblationKind::data_size: return {"50", "100", "200"};
  }
  return {};
}

std::vector<AblationRow> run_ablation(AblationKind kind, const std::vector<std::string>& values, const RunConfig& base,
                                      const Dataset& train_data, const Dataset& test_data,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  for (const std::string& value : values) {
    RunConfig rc = base;
    Dataset subset;
    const Dataset* train_ptr = &train_data;
    switch (kind) {
      case AblationKind::radius:
        rc.set("graph", "radius");
        rc.set("radius", value);
        break;
      case AblationKind::knn:
        rc.set("graph", "knn");
        rc.set("knn_k", value);
        break;
      case AblationKind::pos_enc:
        rc.set("pos_enc", value);
        break;
      case AblationKind::data_size: {
        std::size_t n = 0;
        try {
          n = std::stoul(value);
        } catch (const std::exception&) {
          throw ConfigError("data size '" + value + "' is not an integer");
        }
        if (n == 0 || n > train_data.size()) throw ConfigError("data size " + value + " exceeds the training set");
        subset.header = train_data.header;
        subset.shared_points = train_data.shared_points;
        subset.samples.assign(train_data.samples.begin(), train_data.samples.begin() + static_cast<std::ptrdiff_t>(n));
        train_ptr = &subset;
        break;
      }
    }
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome o = run_experiment(rc, *train_ptr, test_data);
    AblationRow row;
    row.factor = to_string(kind);
    row.value = value;
    row.config_hash = rc.hash();
    row.nrmse = o.test.nrmse;
    row.rmse = o.test.rmse;
    row.edges = o.model->prepare_input(train_ptr->points(0)).graph->edge_count();
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows, const std::string& header_comment) {
  auto out = open_csv(path, header_comment);
  out << "factor,value,config_hash,nrmse,rmse,edges,seconds\n";
  for (const auto& r : rows) {
    out << r.factor << "," << r.value << "," << r.config_hash << "," << num(r.nrmse) << "," << num(r.rmse) << ","
        << r.edges << "," << num(r.seconds) << "\n";
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace gtno
