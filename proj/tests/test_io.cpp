#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "gtno/checkpoint.hpp"
#include "gtno/errors.hpp"
#include "gtno/experiments.hpp"
#include "gtno/pde_data.hpp"
#include "gtno/run_config.hpp"
#include "helpers.hpp"

using namespace gtno;

namespace {

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Dataset small_set() {
  GenOptions g;
  g.count = 3;
  g.nx = g.ny = 8;
  g.seed = 21;
  return generate_dataset(g);
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("dataset round trip is bit exact") {
    Dataset d = small_set();
    const std::string path = testing::temp_path("io_roundtrip.hmlt");
    write_dataset(path, d);
    CHECK(slurp(path) == dataset_bytes(d));
    Dataset back = read_dataset(path);
    CHECK(back.header == d.header);
    CHECK(dataset_bytes(back) == dataset_bytes(d));
    CHECK(back.samples[2].target[0][17] == d.samples[2].target[0][17]);
  }

  TEST_CASE("corrupt dataset files") {
    Dataset d = small_set();
    const auto bytes = dataset_bytes(d);
    const std::string path = testing::temp_path("io_corrupt.hmlt");

    auto bad = bytes;
    bad[0] = 'X';
    spit(path, bad);
    CHECK_THROWS_AS(read_dataset(path), MagicError);

    bad = bytes;
    bad[4] = 9;
    spit(path, bad);
    CHECK_THROWS_AS(read_dataset(path), VersionError);

    bad.assign(bytes.begin(), bytes.end() - 5);
    spit(path, bad);
    CHECK_THROWS_AS(read_dataset(path), TruncatedError);

    bad = bytes;
    bad.push_back(0);
    spit(path, bad);
    CHECK_THROWS_AS(read_dataset(path), FormatError);

    CHECK_THROWS_AS(read_dataset(testing::temp_path("does_not_exist.hmlt")), IoError);
  }

  TEST_CASE("checkpoint round trip with and without training state") {
    Dataset d = small_set();
    ModelConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.cross_heads = 2;
    c.pos_enc = PosEncoding::concat_coords;
    c.seed = 99;
    OperatorModel m(resolve_model_config(c, d.header));
    fit_normalization(m, d);
    TrainingState st;
    st.step = 12;
    st.total_steps = 40;
    st.epoch = 3;
    st.best_metric = 0.25;
    for (Tensor* p : m.parameters()) {
      st.adam_m.emplace_back(p->numel(), 0.5);
      st.adam_v.emplace_back(p->numel(), 0.125);
    }
    const std::string path = testing::temp_path("io_model.ckpt");
    save_checkpoint(path, m, &st);
    CHECK(slurp(path) == checkpoint_bytes(m, &st));
    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.model->config() == m.config());
    REQUIRE(ck.state.has_value());
    CHECK(*ck.state == st);
    CHECK(checkpoint_bytes(*ck.model, &*ck.state) == checkpoint_bytes(m, &st));

    save_checkpoint(path, m);
    CHECK_FALSE(load_checkpoint(path).state.has_value());

    // A dataset file is not a checkpoint.
    write_dataset(path, d);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }

  TEST_CASE("corrupt checkpoints") {
    OperatorModel m(ModelConfig{});
    auto bytes = checkpoint_bytes(m);
    const std::string path = testing::temp_path("io_bad.ckpt");
    auto bad = bytes;
    bad[1] = 0;
    spit(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), MagicError);
    bad.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
    spit(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), TruncatedError);
  }

  TEST_CASE("external point clouds") {
    Dataset d;
    d.header.kind = DatasetKind::external;
    d.header.points = 3;
    d.header.bounds = {{0.0, 2.0}, {0.0, 1.0}};
    PointSet pts(Tensor::from({3, 2}, {0.1, 0.2, 1.9, 0.5, 0.7, 0.9}), d.header.bounds);
    Sample s;
    s.theta = Tensor::from({3, 1}, {1, 2, 3});
    s.target = {Tensor::from({3, 1}, {4, 5, 6})};
    s.points = pts;
    d.samples.push_back(s);
    const std::string path = testing::temp_path("io_external.hmlt");
    write_dataset(path, d);
    Dataset back = load_external_pointcloud_dataset(path);
    CHECK(back.points(0).coord(1, 0) == 1.9);
    CHECK(back.header.nx == 0);
  }

  TEST_CASE("run config") {
    RunConfig rc = RunConfig::parse("# desk run\nd_model = 16\nlr_init=2e-3  # peak\npos_enc = concat-coords\n");
    CHECK(rc.model.d_model == 16);
    CHECK(rc.train.lr_init == 2e-3);
    CHECK(rc.model.pos_enc == PosEncoding::concat_coords);
    CHECK(RunConfig::parse(rc.to_text()).to_text() == rc.to_text());
    CHECK(RunConfig::parse(rc.to_text()).hash() == rc.hash());
    RunConfig other = rc;
    other.set("radius", "0.12");
    CHECK(other.hash() != rc.hash());
    CHECK(rc.hash().size() == 16);
    CHECK_THROWS_AS(RunConfig::parse("no_such_key = 1"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("epochs = ten"), ConfigError);
    CHECK_THROWS_AS(RunConfig::parse("epochs"), ConfigError);
    CHECK(RunConfig::keys().size() == 35);
  }
}
