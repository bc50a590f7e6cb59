#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gtno/checkpoint.hpp"
#include "gtno/experiments.hpp"
#include "helpers.hpp"

using namespace gtno;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const std::string& log = "") {
  const std::string out = log.empty() ? testing::temp_path("cli_last.log") : log;
  const int status = std::system((std::string(GTNO_CLI) + " " + args + " > " + out + " 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> csv_rows(const std::string& path) {
  std::vector<std::string> rows;
  std::istringstream in(read_text(path));
  std::string line;
  do std::getline(in, line);
  while (line.starts_with("#"));
  while (std::getline(in, line)) rows.push_back(line.substr(0, line.rfind(',')));  // drop seconds
  return rows;
}

struct Workspace {
  std::string dir;
  explicit Workspace(const std::string& name) : dir(testing::temp_path(name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  std::string operator/(const std::string& f) const { return dir + "/" + f; }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit with 2") {
    Workspace w("cli_usage");
    CHECK(run("gen darcy --out " + (w / "x") + " --n 0") == 2);
    CHECK(run("train --set train_data=" + (w / "missing.hmlt")) == 2);
    CHECK(run("train --set no_such_key=1") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("eval --checkpoint " + (w / "none.ckpt") + " --data " + (w / "none.hmlt")) == 2);
  }

  TEST_CASE("gen, info, baseline") {
    Workspace w("cli_gen");
    REQUIRE(run("gen darcy --out " + (w / "d") + " --n 4 --n-test 2 --grid 8 --seed 5") == 0);
    CHECK(fs::exists(w / "d_train.hmlt"));
    const std::string log = w / "info.log";
    CHECK(run("info " + (w / "d_test.hmlt"), log) == 0);
    CHECK(read_text(log).find("samples=2") != std::string::npos);
    CHECK(read_text(log).find("seed=9") != std::string::npos);
    CHECK(run("baseline --train " + (w / "d_train.hmlt") + " --test " + (w / "d_test.hmlt")) == 0);
  }

  TEST_CASE("corrupted files exit with 3") {
    Workspace w("cli_corrupt");
    REQUIRE(run("gen darcy --out " + (w / "d") + " --n 2 --grid 8") == 0);
    const std::string f = w / "d_train.hmlt";
    {
      std::fstream io(f, std::ios::in | std::ios::out | std::ios::binary);
      io.seekp(0);
      io.put('Z');
    }
    CHECK(run("info " + f) == 3);
    CHECK(run("baseline --train " + f + " --test " + f) == 3);
  }

  TEST_CASE("train, eval at another resolution, resume an interrupted run") {
    Workspace w("cli_train");
    REQUIRE(run("gen darcy --out " + (w / "d") + " --n 4 --n-test 2 --grid 8 --seed 3") == 0);
    const std::string cfg = w / "run.cfg.in";
    {
      std::ofstream out(cfg);
      out << "d_model = 8\nn_heads = 2\ncross_heads = 2\nd_dec = 8\nn_gt_blocks = 1\nradius = 0.3\n"
          << "lr_init = 2e-3\nbatch_size = 2\nepochs = 4\n"
          << "train_data = " << (w / "d_train.hmlt") << "\ntest_data = " << (w / "d_test.hmlt") << "\n";
    }
    REQUIRE(run("train --config " + cfg + " --set out_dir=" + (w / "full")) == 0);
    CHECK(fs::exists(w / "full/model.ckpt"));
    CHECK(fs::exists(w / "full/last.ckpt"));
    CHECK(fs::exists(w / "full/run.cfg"));
    CHECK(run("eval --checkpoint " + (w / "full/model.ckpt") + " --data " + (w / "d_test.hmlt") +
              " --query-res 11 --errors-csv " + (w / "err.csv")) == 0);
    CHECK(fs::exists(w / "err.csv"));

    // Reproduce the CLI's run up to epoch 2 in-process and save it as an
    // interrupted checkpoint.
    RunConfig rc = RunConfig::load(cfg);
    Dataset tr = read_dataset(w / "d_train.hmlt"), te = read_dataset(w / "d_test.hmlt");
    OperatorModel m(resolve_model_config(rc.model, tr.header));
    fit_normalization(m, tr);
    TrainingState st;
    struct Stop {};
    try {
      train(m, prepare_samples(m, tr), prepare_samples(m, te), rc.train, &st, [](const EpochRecord& r) {
        if (r.epoch == 2) throw Stop{};
      });
    } catch (const Stop&) {
    }
    REQUIRE(st.epoch == 2);
    save_checkpoint(w / "half.ckpt", m, &st);
    const std::string log = w / "resume.log";
    REQUIRE(run("train --config " + cfg + " --set out_dir=" + (w / "resumed") + " --resume " + (w / "half.ckpt"), log) ==
            0);
    CHECK(read_text(log).find("resuming at step 4 of 8") != std::string::npos);
    const auto full = csv_rows(w / "full/history.csv"), resumed = csv_rows(w / "resumed/history.csv");
    REQUIRE(full.size() == 4);
    REQUIRE(resumed.size() == 2);
    CHECK(resumed[0] == full[2]);
    CHECK(resumed[1] == full[3]);
  }

  TEST_CASE("ablate and invariance write their tables") {
    Workspace w("cli_sweeps");
    REQUIRE(run("gen darcy --out " + (w / "a") + " --n 4 --n-test 2 --grid 8 --seed 1") == 0);
    REQUIRE(run("gen darcy --out " + (w / "b") + " --n 4 --n-test 2 --grid 12 --seed 1") == 0);
    const std::string common = " --set d_model=8 --set n_heads=2 --set cross_heads=2 --set d_dec=8 --set epochs=1"
                               " --set train_data=" + (w / "a_train.hmlt") + " --set test_data=" + (w / "a_test.hmlt");
    CHECK(run("ablate --kind radius --values 0.2,0.4 --csv " + (w / "ab.csv") + common) == 0);
    CHECK(csv_rows(w / "ab.csv").size() == 2);
    REQUIRE(run("train" + common + " --set out_dir=" + (w / "m")) == 0);
    CHECK(run("invariance --checkpoint " + (w / "m/model.ckpt") + " --data " + (w / "a_test.hmlt") + " " +
              (w / "b_test.hmlt") + " --csv " + (w / "inv.csv")) == 0);
    CHECK(run("invariance --checkpoint " + (w / "m/model.ckpt") + " --data " + (w / "b_test.hmlt") + " " +
              (w / "a_test.hmlt")) == 2);
  }

  TEST_CASE("converted point clouds load as external datasets") {
    Workspace w("cli_convert");
    const std::string npz = w / "mesh.npz", out = w / "mesh.hmlt";
    const std::string script =
        "import numpy as np\n"
        "rng = np.random.default_rng(0)\n"
        "L = 37\n"
        "r = np.sqrt(rng.uniform(0.05, 1.0, L)); a = rng.uniform(0, 2*np.pi, L)\n"
        "pos = np.stack([r*np.cos(a), r*np.sin(a)], 1)\n"
        "theta = rng.normal(size=(3, L, 2)); target = rng.normal(size=(3, L, 1))\n"
        "np.savez('" + npz + "', positions=pos, theta=theta, target=target)\n";
    {
      std::ofstream py(w / "make.py");
      py << script;
    }
    REQUIRE(std::system((std::string(PYTHON) + " " + (w / "make.py")).c_str()) == 0);
    const int status = std::system((std::string(PYTHON) + " " + CONVERTER + " " + npz + " " + out + " > /dev/null").c_str());
    REQUIRE(WEXITSTATUS(status) == 0);
    Dataset d = load_external_pointcloud_dataset(out);
    CHECK(d.header.points == 37);
    CHECK(d.header.in_channels == 2);
    CHECK(d.size() == 3);
    const std::string log = w / "info.log";
    CHECK(run("info " + out, log) == 0);
    CHECK(read_text(log).find("points=37") != std::string::npos);
    // The converted set trains end to end.
    CHECK(run("train --set d_model=8 --set n_heads=2 --set cross_heads=2 --set d_dec=8 --set epochs=1 --set radius=0.4"
              " --set train_data=" + out + " --set out_dir=" + (w / "m")) == 0);
  }
}
