#include "tdgp/commands.hpp"

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "doctest.h"
#include "tdgp/dgp.hpp"
#include "tdgp/io.hpp"

using namespace tdgp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("tdgp_cmd_test_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// small but nondegenerate pipeline configuration
RunConfig tiny_config() {
  return RunConfig::parse_text(
      "seed = 5\n"
      "inducing = 12\n"
      "epochs = 2\n"
      "s_pred = 4\n"
      "synth_patients = 3\n"
      "synth_nx = 16\n"
      "synth_ny = 16\n"
      "synth_nz = 1\n"
      "synth_t_min = 10\n"
      "synth_t_max = 12\n");
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

}  // namespace

TEST_CASE("synth -> preprocess -> train -> predict -> evaluate") {
  TempDir dir;
  RunConfig cfg = tiny_config();

  cmd_synth(cfg, dir.file("cohort"));
  CHECK(fs::exists(dir.file("cohort/patient000_ctp.bin")));
  CHECK(fs::exists(dir.file("cohort/patient002_labels.bin")));
  CHECK(fs::exists(dir.file("cohort/patient001_genmask.bin")));

  cmd_preprocess(cfg, dir.file("cohort"), dir.file("matrix.bin"));
  VoxelMatrix vm = read_matrix(dir.file("matrix.bin"));
  CHECK(vm.patients.size() == 3);
  CHECK(vm.t() == 10);
  CHECK(fs::exists(dir.file("matrix.bin.index.csv")));

  cmd_train(cfg, dir.file("matrix.bin"), dir.file("model.ckpt"));
  LoadedCheckpoint ckpt = read_checkpoint(dir.file("model.ckpt"));
  CHECK(ckpt.seed == 5);
  CHECK(ckpt.iterations > 0);
  CHECK(fs::exists(dir.file("model.ckpt.trace.csv")));

  cmd_predict(cfg, dir.file("model.ckpt"), dir.file("matrix.bin"), dir.file("preds"));
  for (const auto& p : vm.patients) {
    ProbabilityVolume prob = read_probabilities(dir.file("preds/" + p.id + "_proba.bin"));
    CHECK(prob.nx == p.nx);
    for (double v : prob.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  EvaluateOutcome outcome = cmd_evaluate(cfg, dir.file("cohort"), dir.file("eval"), false);
  REQUIRE(outcome.variants.size() == 1);
  CHECK(outcome.variants[0].name == "itdgp");
  CHECK(outcome.variants[0].result.folds.size() == 3);
  CHECK(fs::exists(dir.file("eval/scores_itdgp.csv")));
  CHECK(fs::exists(dir.file("eval/summary.txt")));

  // per-patient DSC rows plus mean/std summary rows
  std::string csv = slurp(dir.file("eval/scores_itdgp.csv"));
  CHECK(csv.find("patient_id,dsc,jaccard,precision,recall,true_ml,pred_ml") == 0);
  CHECK(csv.find("patient000,") != std::string::npos);
  CHECK(csv.find("mean,") != std::string::npos);
  CHECK(csv.find("std,") != std::string::npos);
}

TEST_CASE("train with epochs=0 checkpoints the initialization") {
  TempDir dir;
  RunConfig cfg = tiny_config();
  cmd_synth(cfg, dir.file("cohort"));
  cmd_preprocess(cfg, dir.file("cohort"), dir.file("matrix.bin"));

  RunConfig cfg0 = tiny_config();
  cfg0.set("epochs", "0");
  cmd_train(cfg0, dir.file("matrix.bin"), dir.file("init.ckpt"));
  LoadedCheckpoint ckpt = read_checkpoint(dir.file("init.ckpt"));
  CHECK(ckpt.iterations == 0);

  VoxelMatrix vm = read_matrix(dir.file("matrix.bin"));
  Rng rng(derive_seed(cfg0.seed(), "init"));
  DgpModel fresh = DgpModel::init(cfg0.architecture(vm.t()), vm.x, rng);
  CHECK((ckpt.model.pack_params() - fresh.pack_params()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("determinism: byte-identical outputs across repeated runs") {
  TempDir dir;
  RunConfig cfg = tiny_config();
  cmd_synth(cfg, dir.file("cohort"));

  cmd_evaluate(cfg, dir.file("cohort"), dir.file("eval_a"), false);
  cmd_evaluate(cfg, dir.file("cohort"), dir.file("eval_b"), false);
  CHECK(slurp(dir.file("eval_a/scores_itdgp.csv")) ==
        slurp(dir.file("eval_b/scores_itdgp.csv")));
  CHECK(slurp(dir.file("eval_a/summary.txt")) == slurp(dir.file("eval_b/summary.txt")));

  cmd_preprocess(cfg, dir.file("cohort"), dir.file("m1.bin"));
  cmd_preprocess(cfg, dir.file("cohort"), dir.file("m2.bin"));
  CHECK(slurp(dir.file("m1.bin")) == slurp(dir.file("m2.bin")));

  cmd_train(cfg, dir.file("m1.bin"), dir.file("a.ckpt"));
  cmd_train(cfg, dir.file("m1.bin"), dir.file("b.ckpt"));
  CHECK(slurp(dir.file("a.ckpt")) == slurp(dir.file("b.ckpt")));

  cmd_predict(cfg, dir.file("a.ckpt"), dir.file("m1.bin"), dir.file("pa"));
  cmd_predict(cfg, dir.file("a.ckpt"), dir.file("m1.bin"), dir.file("pb"));
  CHECK(slurp(dir.file("pa/patient000_proba.bin")) ==
        slurp(dir.file("pb/patient000_proba.bin")));
}

TEST_CASE("checkpointed predictions match in-process predictions bit-exactly") {
  TempDir dir;
  RunConfig cfg = tiny_config();
  cmd_synth(cfg, dir.file("cohort"));
  cmd_preprocess(cfg, dir.file("cohort"), dir.file("matrix.bin"));
  cmd_train(cfg, dir.file("matrix.bin"), dir.file("model.ckpt"));
  cmd_predict(cfg, dir.file("model.ckpt"), dir.file("matrix.bin"), dir.file("preds"));

  // retrace the training in-process and predict with the same seed derivation
  VoxelMatrix vm = read_matrix(dir.file("matrix.bin"));
  Eigen::VectorXd y(vm.v());
  for (int i = 0; i < vm.v(); ++i) y(i) = vm.y[static_cast<std::size_t>(i)];
  Rng init_rng(derive_seed(cfg.seed(), "init"));
  DgpModel model = DgpModel::init(cfg.architecture(vm.t()), vm.x, init_rng);
  fit(model, vm.x, y, cfg.train_config());

  const auto& range = vm.patients[0];
  Eigen::VectorXd in_process = predict_proba(
      model, vm.x.middleRows(range.offset, range.count),
      static_cast<int>(cfg.integer("s_pred")), derive_seed(cfg.seed(), "predict", 0));
  ProbabilityVolume from_cmd =
      read_probabilities(dir.file("preds/" + range.id + "_proba.bin"));
  for (int i = 0; i < range.count; ++i) {
    const auto& k = vm.index_map[static_cast<std::size_t>(range.offset + i)];
    CHECK(from_cmd.at(k.x, k.y, k.z) == in_process(i));
  }
}

TEST_CASE("smooth_binary reproduces the literal binary-mask convolution") {
  TempDir dir;
  RunConfig cfg = tiny_config();
  cfg.set("smooth_binary", "true");
  cmd_synth(cfg, dir.file("cohort"));
  EvaluateOutcome outcome = cmd_evaluate(cfg, dir.file("cohort"), dir.file("eval"), false);
  CHECK(outcome.variants[0].result.failed_folds == 0);
  CHECK(fs::exists(dir.file("eval/scores_itdgp.csv")));
}

TEST_CASE("predict accepts a raw 4D series") {
  TempDir dir;
  RunConfig cfg = tiny_config();
  cmd_synth(cfg, dir.file("cohort"));
  cmd_preprocess(cfg, dir.file("cohort"), dir.file("matrix.bin"));
  cmd_train(cfg, dir.file("matrix.bin"), dir.file("model.ckpt"));

  // patient001 has t_p = 11 > T = 10, exercising the predict-side trim
  cmd_predict(cfg, dir.file("model.ckpt"), dir.file("cohort/patient001_ctp.bin"),
              dir.file("raw_preds"));
  ProbabilityVolume prob =
      read_probabilities(dir.file("raw_preds/patient001_ctp_proba.bin"));
  CHECK(prob.nx == 16);
  double max_p = 0.0;
  for (double v : prob.data) max_p = std::max(max_p, v);
  CHECK(max_p > 0.0);  // something was predicted inside the mask
}

TEST_CASE("ablation emits all four variants") {
  TempDir dir;
  RunConfig cfg = tiny_config();
  cmd_synth(cfg, dir.file("cohort"));
  EvaluateOutcome outcome = cmd_evaluate(cfg, dir.file("cohort"), dir.file("eval"), true);
  REQUIRE(outcome.variants.size() == 4);
  CHECK(outcome.variants[0].name == "threshold");
  CHECK(outcome.variants[1].name == "tdgp");
  CHECK(outcome.variants[2].name == "itdgp_post");
  CHECK(outcome.variants[3].name == "itdgp");
  for (const auto& v : outcome.variants)
    CHECK(fs::exists(dir.file("eval/scores_" + v.name + ".csv")));
}

TEST_CASE("gradcheck command reports a small max relative error") {
  RunConfig cfg = RunConfig::defaults();
  CHECK(cmd_gradcheck(cfg) <= 1e-3);
}

TEST_CASE("command error categories") {
  TempDir dir;
  RunConfig cfg = tiny_config();
  try {
    cmd_preprocess(cfg, dir.file("nonexistent"), dir.file("m.bin"));
    FAIL("expected an io error");
  } catch (const TdgpError& e) {
    CHECK(e.category() == ErrorCategory::io);
  }
  try {
    cmd_train(cfg, dir.file("missing_matrix.bin"), dir.file("m.ckpt"));
    FAIL("expected an io error");
  } catch (const TdgpError& e) {
    CHECK(e.category() == ErrorCategory::io);
  }
}
