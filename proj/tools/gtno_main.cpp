// Command-line front end: data generation, training, evaluation,
// resolution sweeps and ablations.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gtno/checkpoint.hpp"
#include "gtno/errors.hpp"
#include "gtno/experiments.hpp"
#include "gtno/pde_data.hpp"
#include "gtno/run_config.hpp"
#include "gtno/training.hpp"

namespace fs = std::filesystem;
using namespace gtno;

namespace {

Dataset read_existing(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " path given");
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " '" + path + "' does not exist");
  return read_dataset(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void print_metrics(const EvalResult& ev) {
  std::printf("%-8s %14s\n", "sample", "rel_l2");
  for (std::size_t i = 0; i < ev.per_sample.size(); ++i) std::printf("%-8zu %14.6e\n", i, ev.per_sample[i]);
  std::printf("nRMSE %.6e\nRMSE  %.6e\n", ev.nrmse, ev.rmse);
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string kind, out;
  std::size_t n = 0, n_test = 0, grid = 16, t_in = 4, t_out = 10;
  std::uint64_t seed = 0;
  double beta = 1.0;
  bool no_reactions = false;
};

int cmd_gen(const GenArgs& a) {
  if (a.n == 0) throw ConfigError("--n must be positive");
  GenOptions opt;
  opt.kind = parse_dataset_kind(a.kind);
  opt.nx = opt.ny = a.grid;
  opt.t_in = a.t_in;
  opt.t_out = a.t_out;
  opt.darcy.beta = a.beta;
  opt.diffreact.reactions = !a.no_reactions;
  if (opt.kind == DatasetKind::darcy && a.grid < 8) throw ConfigError("Darcy grids must be at least 8x8");

  const std::size_t n_test = a.n_test ? a.n_test : std::max<std::size_t>(1, a.n / 4);
  opt.count = a.n;
  opt.seed = a.seed;
  const Dataset train_set = generate_dataset(opt);
  opt.count = n_test;
  opt.seed = a.seed + a.n;  // disjoint seed range
  const Dataset test_set = generate_dataset(opt);

  const std::string train_path = a.out + "_train.hmlt", test_path = a.out + "_test.hmlt";
  if (auto parent = fs::path(a.out).parent_path(); !parent.empty()) ensure_dir(parent.string());
  write_dataset(train_path, train_set);
  write_dataset(test_path, test_set);
  std::printf("wrote %s (%zu samples) and %s (%zu samples), kind=%s grid=%zux%zu seed=%llu\n", train_path.c_str(),
              train_set.size(), test_path.c_str(), test_set.size(), to_string(opt.kind).c_str(), a.grid, a.grid,
              static_cast<unsigned long long>(a.seed));
  return 0;
}

// ---------------------------------------------------------------------------

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig rc = path.empty() ? RunConfig{} : RunConfig::load(path);
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    rc.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return rc;
}

int cmd_train(const std::string& config, const std::vector<std::string>& sets, const std::string& resume) {
  RunConfig rc = load_run_config(config, sets);
  const Dataset train_data = read_existing(rc.train_data, "training dataset");
  const Dataset test_data = rc.test_data.empty() ? Dataset{} : read_existing(rc.test_data, "test dataset");
  ensure_dir(rc.out_dir);
  const fs::path dir(rc.out_dir);
  write_text(dir / "run.cfg", rc.to_text());

  std::unique_ptr<OperatorModel> model;
  TrainingState state;
  if (!resume.empty()) {
    if (!fs::exists(resume)) throw ConfigError("checkpoint '" + resume + "' does not exist");
    Checkpoint ck = load_checkpoint(resume);
    if (!ck.state) throw ConfigError("checkpoint '" + resume + "' holds no training state");
    model = std::move(ck.model);
    state = *ck.state;
    std::printf("resuming at step %llu of %llu (epoch %llu)\n", static_cast<unsigned long long>(state.step),
                static_cast<unsigned long long>(state.total_steps), static_cast<unsigned long long>(state.epoch));
  } else {
    model = std::make_unique<OperatorModel>(resolve_model_config(rc.model, train_data.header));
    if (rc.normalize) fit_normalization(*model, train_data);
  }
  const auto train_set = prepare_samples(*model, train_data);
  const auto test_set = test_data.size() ? prepare_samples(*model, test_data) : std::vector<PreparedSample>{};
  std::printf("config %s, %zu parameters, %zu train / %zu test samples\n", rc.hash().c_str(), model->parameter_count(),
              train_set.size(), test_set.size());

  const std::string last = (dir / "last.ckpt").string();
  TrainHistory hist;
  try {
    hist = train(*model, train_set, test_set, rc.train, &state, [&](const EpochRecord& r) {
      std::printf("epoch %4u  loss %.6e  eval_nrmse %.6e  eval_rmse %.6e  lr %.3e  %.2fs\n", r.epoch, r.train_loss,
                  r.eval_nrmse, r.eval_rmse, r.lr, r.seconds);
      std::fflush(stdout);
      save_checkpoint(last, *model, &state);
    });
  } catch (const NumericFault&) {
    save_checkpoint((dir / "model.ckpt").string(), *model, &state);
    throw;
  }
  hist.write_csv((dir / "history.csv").string());
  save_checkpoint((dir / "model.ckpt").string(), *model, &state);
  const EvalResult ev = evaluate(*model, test_set.empty() ? train_set : test_set);
  std::printf("final eval nRMSE %.6e  RMSE %.6e  (best epoch %u)\n", ev.nrmse, ev.rmse, hist.best_epoch);
  return 0;
}

// ---------------------------------------------------------------------------

std::unique_ptr<OperatorModel> read_model(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint '" + path + "' does not exist");
  return load_checkpoint(path).model;
}

void check_compatible(const OperatorModel& m, const DatasetHeader& h) {
  const ModelConfig& c = m.config();
  if (c.in_channels != h.in_channels || c.out_channels != h.out_channels || c.spatial_dims != h.bounds.size() ||
      (c.mode == DecoderMode::rollout) != (h.t_out != 0)) {
    throw ConfigError("checkpoint and dataset are incompatible (channels, dimension or decoder mode)");
  }
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, std::size_t query_res, const std::string& errors_csv) {
  auto model = read_model(ckpt);
  const Dataset data = read_existing(data_path, "dataset");
  check_compatible(*model, data.header);
  std::vector<PreparedSample> samples = prepare_samples(*model, data);

  std::optional<PointSet> query_points;
  if (query_res != 0 && (query_res != data.header.nx || query_res != data.header.ny)) {
    if (data.header.kind != DatasetKind::darcy) {
      throw ConfigError("a different query resolution needs regenerable reference data (darcy only)");
    }
    // Rebuild the reference solutions of the same fields on the query grid.
    DarcyParams p;
    p.beta = data.header.param("beta").value_or(p.beta);
    p.a_low = data.header.param("a_low").value_or(p.a_low);
    p.a_high = data.header.param("a_high").value_or(p.a_high);
    p.tau = data.header.param("tau").value_or(p.tau);
    p.alpha = data.header.param("alpha").value_or(p.alpha);
    p.modes = static_cast<std::uint32_t>(data.header.param("modes").value_or(p.modes));
    query_points = uniform_grid(query_res, query_res, data.header.bounds[0], data.header.bounds[1]);
    const QueryContext q = model->prepare_query(*query_points);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto a = gen_darcy_coefficient(data.header.seed + i, query_res, query_res, p);
      auto u = solve_darcy(a, p.beta, query_res, query_res);
      samples[i].query = q;
      samples[i].target = {Tensor::from({query_res * query_res, 1}, std::move(u))};
    }
    std::printf("query grid %zux%zu (input %ux%u)\n", query_res, query_res, data.header.nx, data.header.ny);
  }
  const EvalResult ev = evaluate(*model, samples);
  print_metrics(ev);

  if (!errors_csv.empty()) {
    std::ofstream out(errors_csv);
    if (!out) throw IoError("cannot write '" + errors_csv + "'");
    out << "sample,point,x,y,frame,channel,prediction,target,error\n";
    const std::size_t out_ch = model->config().out_channels;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto pred = predict_flat(*model, samples[i]);
      const auto tgt = target_flat(samples[i]);
      const Tensor& pos = samples[i].query.unit_positions;
      const PointSet& pts = query_points ? *query_points : data.points(i);
      const std::size_t L = pos.rows();
      for (std::size_t k = 0; k < pred.size(); ++k) {
        const std::size_t frame = k / (L * out_ch), rem = k % (L * out_ch), pt = rem / out_ch, ch = rem % out_ch;
        char buf[256];
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%zu,%zu,%.10g,%.10g,%.10g\n", i, pt, pts.coord(pt, 0),
                      pts.dims() > 1 ? pts.coord(pt, 1) : 0.0, frame, ch, pred[k], tgt[k], pred[k] - tgt[k]);
        out << buf;
      }
    }
  }
  return 0;
}

int cmd_invariance(const std::string& ckpt, const std::vector<std::string>& paths, const std::string& csv) {
  auto model = read_model(ckpt);
  std::vector<Dataset> family;
  for (const auto& p : paths) {
    family.push_back(read_existing(p, "dataset"));
    check_compatible(*model, family.back().header);
  }
  const auto rows = invariance_sweep(*model, family);
  std::printf("%8s %8s %14s %14s %14s\n", "grid", "points", "nRMSE", "RMSE", "R_K");
  for (const auto& r : rows) {
    std::printf("%4zux%-3zu %8zu %14.6e %14.6e %14.6e\n", r.nx, r.ny, r.points, r.nrmse, r.rmse, r.r_k);
  }
  double lo = rows[0].r_k, hi = rows[0].r_k;
  for (const auto& r : rows) {
    lo = std::min(lo, r.r_k);
    hi = std::max(hi, r.r_k);
  }
  std::printf("R_K max/min ratio %.4f\n", lo > 0.0 ? hi / lo : 0.0);
  if (!csv.empty()) write_invariance_csv(csv, rows, "checkpoint = " + ckpt + "\nseed = " + std::to_string(family[0].header.seed));
  return 0;
}

int cmd_ablate(const std::string& kind_s, const std::string& config, const std::vector<std::string>& sets,
               const std::vector<std::string>& values, const std::string& csv) {
  const AblationKind kind = parse_ablation_kind(kind_s);
  RunConfig rc = load_run_config(config, sets);
  const Dataset train_data = read_existing(rc.train_data, "training dataset");
  const Dataset test_data = rc.test_data.empty() ? Dataset{} : read_existing(rc.test_data, "test dataset");
  const auto vals = values.empty() ? default_ablation_values(kind) : values;
  std::printf("%-10s %-14s %-16s %14s %14s %8s %9s\n", "factor", "value", "config", "nRMSE", "RMSE", "edges", "seconds");
  const auto rows = run_ablation(kind, vals, rc, train_data, test_data, [](const AblationRow& r) {
    std::printf("%-10s %-14s %-16s %14.6e %14.6e %8zu %9.1f\n", r.factor.c_str(), r.value.c_str(), r.config_hash.c_str(),
                r.nrmse, r.rmse, r.edges, r.seconds);
    std::fflush(stdout);
  });
  if (!csv.empty()) write_ablation_csv(csv, rows, rc.to_text());
  return 0;
}

int cmd_baseline(const std::string& train_path, const std::string& test_path) {
  const Dataset tr = read_existing(train_path, "training dataset");
  const Dataset te = read_existing(test_path, "test dataset");
  std::printf("best constant nRMSE      %.6e\n", constant_baseline_nrmse(te));
  std::printf("nearest neighbour nRMSE  %.6e\n", nearest_neighbor_baseline_nrmse(tr, te));
  return 0;
}

int cmd_info(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("'" + path + "' does not exist");
  try {
    const Dataset d = read_dataset(path);
    const DatasetHeader& h = d.header;
    std::printf("dataset kind=%s samples=%zu points=%u grid=%ux%u in=%u out=%u t_in=%u t_out=%u seed=%llu\n",
                to_string(h.kind).c_str(), d.size(), h.points, h.nx, h.ny, h.in_channels, h.out_channels, h.t_in, h.t_out,
                static_cast<unsigned long long>(h.seed));
    for (const auto& [k, v] : h.params) std::printf("  %s = %.10g\n", k.c_str(), v);
    return 0;
  } catch (const MagicError&) {
    throw;
  } catch (const FormatError&) {
    // Not a dataset; try the checkpoint layout below.
  }
  const Checkpoint ck = load_checkpoint(path);
  RunConfig rc;
  rc.model = ck.model->config();
  std::printf("checkpoint, %zu parameters\n%s", ck.model->parameter_count(), rc.to_text().c_str());
  if (ck.state) {
    std::printf("training state: step %llu of %llu, epoch %llu\n", static_cast<unsigned long long>(ck.state->step),
                static_cast<unsigned long long>(ck.state->total_steps), static_cast<unsigned long long>(ck.state->epoch));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Graph-transformer neural operator toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate train and test datasets");
  g->add_option("kind", gen.kind, "darcy | swe | diffreact")->required();
  g->add_option("--out", gen.out, "Output prefix; writes <out>_train.hmlt and <out>_test.hmlt")->required();
  g->add_option("--n", gen.n, "Training samples")->required();
  g->add_option("--n-test", gen.n_test, "Test samples (default n/4)");
  g->add_option("--grid", gen.grid, "Grid points per axis");
  g->add_option("--seed", gen.seed, "Base seed");
  g->add_option("--beta", gen.beta, "Darcy forcing");
  g->add_option("--t-in", gen.t_in, "Input frames (time-dependent kinds)");
  g->add_option("--t-out", gen.t_out, "Target frames (time-dependent kinds)");
  g->add_flag("--no-reactions", gen.no_reactions, "Diffusion only");

  std::string config, resume, ckpt, data, errors_csv, csv, kind, train_path, test_path, info_path;
  std::vector<std::string> sets, values, datas;
  std::size_t query_res = 0;

  auto* t = app.add_subcommand("train", "Train a model from a run config");
  t->add_option("--config", config, "key = value run config");
  t->add_option("--set", sets, "Override a config key (key=value)");
  t->add_option("--resume", resume, "Continue from a checkpoint with training state");

  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  e->add_option("--checkpoint", ckpt)->required();
  e->add_option("--data", data)->required();
  e->add_option("--query-res", query_res, "Query grid points per axis (default: the input grid)");
  e->add_option("--errors-csv", errors_csv, "Per-point error field output");

  auto* inv = app.add_subcommand("invariance", "Error across resolutions of the same fields");
  inv->add_option("--checkpoint", ckpt)->required();
  inv->add_option("--data", datas, "Datasets, coarse to fine")->required();
  inv->add_option("--csv", csv);

  auto* ab = app.add_subcommand("ablate", "Sweep one factor with shared data and seeds");
  ab->add_option("--kind", kind, "radius | knn | pos_enc | data_size")->required();
  ab->add_option("--config", config);
  ab->add_option("--set", sets);
  ab->add_option("--values", values, "Sweep values")->delimiter(',');
  ab->add_option("--csv", csv);

  auto* bl = app.add_subcommand("baseline", "Constant and nearest-neighbour baselines");
  bl->add_option("--train", train_path)->required();
  bl->add_option("--test", test_path)->required();

  auto* in = app.add_subcommand("info", "Describe a dataset or checkpoint file");
  in->add_option("path", info_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*t) return cmd_train(config, sets, resume);
    if (*e) return cmd_eval(ckpt, data, query_res, errors_csv);
    if (*inv) return cmd_invariance(ckpt, datas, csv);
    if (*ab) return cmd_ablate(kind, config, sets, values, csv);
    if (*bl) return cmd_baseline(train_path, test_path);
    if (*in) return cmd_info(info_path);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return static_cast<int>(err.exit_code());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return static_cast<int>(ExitCode::numeric_fault);
  }
  return static_cast<int>(ExitCode::usage);
}
