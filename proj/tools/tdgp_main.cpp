#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tdgp/commands.hpp"
#include "tdgp/errors.hpp"

namespace {

tdgp::RunConfig load_config(const std::string& path, bool have_seed,
                            std::uint64_t seed) {
  tdgp::RunConfig cfg =
      path.empty() ? tdgp::RunConfig::defaults() : tdgp::RunConfig::parse_file(path);
  if (have_seed) cfg.override_seed(seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal deep Gaussian process pipeline for perfusion voxel classification"};
  app.require_subcommand(1);
  app.fallthrough();  // global --config/--seed may follow the subcommand

  std::string config_path;
  std::uint64_t seed = 0;
  bool have_seed = false;
  app.add_option("--config", config_path, "run configuration file (key = value lines)");
  app.add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
    have_seed = true;
  });

  auto* synth = app.add_subcommand("synth", "generate a synthetic perfusion cohort");
  std::string synth_out = "cohort";
  synth->add_option("--out", synth_out, "output directory");

  auto* preprocess = app.add_subcommand("preprocess", "build the voxel matrix from a cohort");
  std::string pre_in, pre_out = "matrix.bin";
  preprocess->add_option("input_dir", pre_in, "cohort directory")->required();
  preprocess->add_option("--out", pre_out, "output matrix archive");

  auto* train = app.add_subcommand("train", "train the model on a voxel matrix");
  std::string train_matrix, train_out = "model.ckpt";
  train->add_option("matrix", train_matrix, "matrix archive")->required();
  train->add_option("--out", train_out, "output checkpoint");

  auto* predict = app.add_subcommand("predict", "write probability maps for a matrix or series");
  std::string pred_ckpt, pred_in, pred_out = "predictions";
  predict->add_option("checkpoint", pred_ckpt, "model checkpoint")->required();
  predict->add_option("input", pred_in, "matrix archive or 4D series raster")->required();
  predict->add_option("--out", pred_out, "output directory");

  auto* evaluate = app.add_subcommand("evaluate", "one-patient-out evaluation on a cohort");
  std::string eval_cohort, eval_out = "evaluation";
  bool ablation = false;
  evaluate->add_option("cohort_dir", eval_cohort, "cohort directory")->required();
  evaluate->add_option("--out", eval_out, "output directory");
  evaluate->add_flag("--ablation", ablation,
                     "also run the thresholding baseline, TDGP, and no-postprocessing variants");

  auto* gradcheck = app.add_subcommand("gradcheck", "verify model gradients against finite differences");

  CLI11_PARSE(app, argc, argv);

  try {
    tdgp::RunConfig cfg = load_config(config_path, have_seed, seed);
    if (synth->parsed()) {
      tdgp::cmd_synth(cfg, synth_out);
      std::cout << "wrote cohort to " << synth_out << "\n";
    } else if (preprocess->parsed()) {
      tdgp::cmd_preprocess(cfg, pre_in, pre_out);
      std::cout << "wrote " << pre_out << " and " << pre_out << ".index.csv\n";
    } else if (train->parsed()) {
      tdgp::cmd_train(cfg, train_matrix, train_out);
      std::cout << "wrote " << train_out << " and " << train_out << ".trace.csv\n";
    } else if (predict->parsed()) {
      tdgp::cmd_predict(cfg, pred_ckpt, pred_in, pred_out);
      std::cout << "wrote probability maps to " << pred_out << "\n";
    } else if (evaluate->parsed()) {
      tdgp::cmd_evaluate(cfg, eval_cohort, eval_out, ablation);
      std::cout << "wrote score tables to " << eval_out << "\n";
    } else if (gradcheck->parsed()) {
      double err = tdgp::cmd_gradcheck(cfg);
      bool pass = err <= 1e-3;
      std::cout << "gradcheck: max_rel_err=" << err << " threshold=0.001 "
                << (pass ? "PASS" : "FAIL") << "\n";
      return pass ? 0 : 1;
    }
  } catch (const tdgp::TdgpError& e) {
    std::cerr << "error: [" << tdgp::to_string(e.category()) << "] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
