#pragma once

#include <string>
#include <vector>

#include "tdgp/config.hpp"
#include "tdgp/metrics.hpp"

namespace tdgp {

// Pipeline commands behind the `tdgp` CLI. Each throws TdgpError on failure;
// all randomness derives from the config seed.

// Writes patientNNN_ctp.bin / _labels.bin / _genmask.bin per patient.
void cmd_synth(const RunConfig& cfg, const std::string& out_dir);

// Reads every *_ctp.bin / *_labels.bin pair under in_dir (sorted), runs the
// preprocessing pipeline, writes the matrix archive plus its index sidecar.
void cmd_preprocess(const RunConfig& cfg, const std::string& in_dir,
                    const std::string& out_file);

// Trains on a matrix archive; writes the checkpoint and <checkpoint>.trace.csv.
void cmd_train(const RunConfig& cfg, const std::string& matrix_file,
               const std::string& out_checkpoint);

// Predicts probabilities for a matrix archive (per patient) or a single raw
// 4D series; writes *_proba.bin rasters under out_dir.
void cmd_predict(const RunConfig& cfg, const std::string& checkpoint_file,
                 const std::string& input_file, const std::string& out_dir);

// One-patient-out evaluation over a synthetic cohort directory. Writes
// scores_<variant>.csv per variant plus summary.txt. Without ablation only
// the full pipeline runs; with it the four variants do: threshold baseline,
// TDGP (plain batches, no postprocessing), the balanced model without
// postprocessing, and the full pipeline.
struct EvaluateOutcome {
  struct Variant {
    std::string name;
    OnePatientOutResult result;
    double r2 = 0.0;
    bool r2_valid = false;
  };
  std::vector<Variant> variants;
};
EvaluateOutcome cmd_evaluate(const RunConfig& cfg, const std::string& cohort_dir,
                             const std::string& out_dir, bool ablation);

// Full-model gradient check against central finite differences on a small
// frozen-draw model; returns the max relative error (pass threshold 1e-3).
double cmd_gradcheck(const RunConfig& cfg);

}  // namespace tdgp
