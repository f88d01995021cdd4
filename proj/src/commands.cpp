#include "tdgp/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "tdgp/io.hpp"
#include "tdgp/postprocess.hpp"
#include "tdgp/synthgen.hpp"

namespace fs = std::filesystem;

namespace tdgp {

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory '" + dir + "': " + ec.message());
}

std::string patient_stem(int index) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "patient%03d", index);
  return buf;
}

// *_ctp.bin / *_labels.bin pairs under dir, sorted by stem
std::vector<std::string> cohort_stems(const std::string& dir) {
  if (!fs::is_directory(dir)) throw io_error("'" + dir + "' is not a directory");
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    const std::string suffix = "_ctp.bin";
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      stems.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw data_error("no *_ctp.bin volumes found in '" + dir + "'");
  return stems;
}

std::vector<CohortPatient> read_cohort(const std::string& dir) {
  std::vector<CohortPatient> cohort;
  for (const auto& stem : cohort_stems(dir)) {
    CohortPatient p;
    p.volume = read_series((fs::path(dir) / (stem + "_ctp.bin")).string());
    p.volume.patient_id = stem;
    p.labels = read_labels((fs::path(dir) / (stem + "_labels.bin")).string());
    cohort.push_back(std::move(p));
  }
  return cohort;
}

void write_score_csv(const std::string& path, const OnePatientOutResult& r) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw io_error("cannot open '" + path + "' for writing");
  os << "patient_id,dsc,jaccard,precision,recall,true_ml,pred_ml\n";
  for (const auto& f : r.folds) {
    if (f.ok)
      os << f.patient_id << "," << format_double(f.dsc) << "," << format_double(f.jaccard)
         << "," << format_double(f.precision) << "," << format_double(f.recall) << ","
         << format_double(f.true_ml) << "," << format_double(f.pred_ml) << "\n";
    else
      os << f.patient_id << ",nan,nan,nan,nan,nan,nan\n";
  }
  os << "mean," << format_double(r.dsc.mean) << "," << format_double(r.jaccard.mean)
     << "," << format_double(r.precision.mean) << "," << format_double(r.recall.mean)
     << "," << format_double(r.true_ml.mean) << "," << format_double(r.pred_ml.mean)
     << "\n";
  os << "std," << format_double(r.dsc.stddev) << "," << format_double(r.jaccard.stddev)
     << "," << format_double(r.precision.stddev) << ","
     << format_double(r.recall.stddev) << "," << format_double(r.true_ml.stddev) << ","
     << format_double(r.pred_ml.stddev) << "\n";
  if (!os) throw io_error("failed writing '" + path + "'");
}

Eigen::MatrixXd rows_excluding_patient(const VoxelMatrix& vm, int patient,
                                       Eigen::VectorXd* labels) {
  const auto& range = vm.patients[static_cast<std::size_t>(patient)];
  const int keep = vm.v() - range.count;
  Eigen::MatrixXd x(keep, vm.t());
  labels->resize(keep);
  int at = 0;
  for (int r = 0; r < vm.v(); ++r) {
    if (r >= range.offset && r < range.offset + range.count) continue;
    x.row(at) = vm.x.row(r);
    (*labels)(at) = vm.y[static_cast<std::size_t>(r)];
    ++at;
  }
  return x;
}

LabelVolume truth_volume(const VoxelMatrix& vm, int patient) {
  const auto& range = vm.patients[static_cast<std::size_t>(patient)];
  LabelVolume out(range.nx, range.ny, range.nz, 0);
  out.spacing = range.spacing;
  for (int i = 0; i < range.count; ++i) {
    const auto& k = vm.index_map[static_cast<std::size_t>(range.offset + i)];
    out.at(k.x, k.y, k.z) = vm.y[static_cast<std::size_t>(range.offset + i)];
  }
  return out;
}

// peak minus early-baseline enhancement, the thresholding baseline's feature
Eigen::VectorXd enhancement(const Eigen::MatrixXd& x) {
  const int head = std::min<int>(3, static_cast<int>(x.cols()));
  Eigen::VectorXd enh(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double base = x.row(r).head(head).mean();
    enh(r) = x.row(r).maxCoeff() - base;
  }
  return enh;
}

double tune_enhancement_cutoff(const Eigen::VectorXd& enh, const Eigen::VectorXd& y) {
  std::vector<double> sorted(enh.data(), enh.data() + enh.size());
  std::sort(sorted.begin(), sorted.end());
  double best_cutoff = sorted.front();
  double best_dsc = -1.0;
  for (int q = 0; q <= 100; ++q) {
    double cutoff = sorted[static_cast<std::size_t>(
        (sorted.size() - 1) * static_cast<std::size_t>(q) / 100)];
    long tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < enh.size(); ++i) {
      bool pred = enh(i) < cutoff;  // lesions enhance less
      bool truth = y(i) != 0.0;
      tp += pred && truth;
      fp += pred && !truth;
      fn += !pred && truth;
    }
    double d = (2 * tp + fp + fn) > 0 ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn)
                                      : 0.0;
    if (d > best_dsc) {
      best_dsc = d;
      best_cutoff = cutoff;
    }
  }
  return best_cutoff;
}

struct VariantSpec {
  std::string name;
  bool model = true;      // false: thresholding baseline
  bool balanced = true;   // plain shuffled batches when false
  bool postprocess = true;
};

FoldScore score_prediction(const VoxelMatrix& vm, int patient,
                           const Eigen::VectorXd& proba, const RunConfig& cfg,
                           bool postprocess) {
  const auto& range = vm.patients[static_cast<std::size_t>(patient)];
  ProbabilityMap map;
  map.values = scatter_to_volume(vm, patient, proba);
  map.mask = patient_mask_from_index(vm, patient);
  map.enforce_invariants();

  const double tau = cfg.number("pp_threshold");
  LabelVolume pred;
  if (postprocess) {
    LognormalKernel2D kernel = cfg.postprocess_kernel();
    if (cfg.flag("smooth_binary")) {
      // literal binary-mask convolution: threshold, convolve, re-threshold
      LabelVolume hard = threshold(map, tau);
      ProbabilityMap binary = map;
      for (std::size_t i = 0; i < hard.data.size(); ++i)
        binary.values.data[i] = hard.data[i];
      pred = threshold(smooth(binary, kernel), tau);
    } else {
      pred = threshold(smooth(map, kernel), tau);
    }
  } else {
    pred = threshold(map, tau);
  }

  LabelVolume truth = truth_volume(vm, patient);
  ConfusionCounts c = confusion(pred, truth, map.mask);
  FoldScore s;
  s.patient_id = range.id;
  s.dsc = dsc(c);
  s.jaccard = jaccard(c);
  s.precision = precision(c);
  s.recall = recall(c);
  s.true_ml = lesion_volume_ml(truth, range.spacing);
  s.pred_ml = lesion_volume_ml(pred, range.spacing);
  return s;
}

}  // namespace

void cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  SynthConfig scfg = cfg.synth_config();
  for (int p = 0; p < scfg.patients; ++p) {
    SynthPatient sp = gen_patient(scfg, p);
    const std::string stem = (fs::path(out_dir) / patient_stem(p)).string();
    write_series(stem + "_ctp.bin", sp.volume);
    write_labels(stem + "_labels.bin", sp.labels);
    write_mask(stem + "_genmask.bin", sp.brain);
  }
}

void cmd_preprocess(const RunConfig& cfg, const std::string& in_dir,
                    const std::string& out_file) {
  PreprocessOutput out = preprocess_cohort(read_cohort(in_dir), cfg.preprocess_config());
  write_matrix(out_file, out.matrix);
  write_index_sidecar(out_file + ".index.csv", out.matrix);
}

void cmd_train(const RunConfig& cfg, const std::string& matrix_file,
               const std::string& out_checkpoint) {
  VoxelMatrix vm = read_matrix(matrix_file);
  Eigen::VectorXd y(vm.v());
  for (int i = 0; i < vm.v(); ++i) y(i) = vm.y[static_cast<std::size_t>(i)];

  Rng init_rng(derive_seed(cfg.seed(), "init"));
  DgpModel model = DgpModel::init(cfg.architecture(vm.t()), vm.x, init_rng);
  FitResult fit_result = fit(model, vm.x, y, cfg.train_config());

  write_checkpoint(out_checkpoint, model, cfg.echo(), cfg.seed(),
                   static_cast<std::uint64_t>(fit_result.trace.size()));
  TraceCsv::write(out_checkpoint + ".trace.csv", fit_result.trace);
}

void cmd_predict(const RunConfig& cfg, const std::string& checkpoint_file,
                 const std::string& input_file, const std::string& out_dir) {
  ensure_dir(out_dir);
  LoadedCheckpoint ckpt = read_checkpoint(checkpoint_file);
  const int s_pred = static_cast<int>(cfg.integer("s_pred"));

  // the input is either a matrix archive or a raw 4D series
  bool is_matrix = false;
  {
    std::ifstream probe(input_file, std::ios::binary);
    if (!probe) throw io_error("cannot open '" + input_file + "' for reading");
    char magic[8] = {};
    probe.read(magic, 8);
    is_matrix = probe && std::string(magic, 8) == "TDGPVMAT";
  }

  if (is_matrix) {
    VoxelMatrix vm = read_matrix(input_file);
    if (vm.t() != ckpt.model.input_dim())
      throw data_error("matrix has T=" + std::to_string(vm.t()) +
                       " but the checkpoint expects " +
                       std::to_string(ckpt.model.input_dim()));
    for (std::size_t p = 0; p < vm.patients.size(); ++p) {
      const auto& range = vm.patients[p];
      Eigen::VectorXd proba = predict_proba(
          ckpt.model, vm.x.middleRows(range.offset, range.count), s_pred,
          derive_seed(cfg.seed(), "predict", static_cast<std::uint64_t>(p)));
      ProbabilityVolume vol = scatter_to_volume(vm, static_cast<int>(p), proba);
      write_probabilities((fs::path(out_dir) / (range.id + "_proba.bin")).string(), vol);
    }
    return;
  }

  CtpVolume4D vol = read_series(input_file);
  vol.patient_id = fs::path(input_file).stem().string();
  PreprocessConfig pre = cfg.preprocess_config();
  if (pre.downsample) vol = downsample2x2(vol);
  MaskVolume mask = mask_brain(vol, pre.mask_low, pre.mask_high);
  vol = spatial_smooth(vol, pre.smooth_sigma_mm);
  const int t_target = ckpt.model.input_dim();
  if (vol.nt < t_target)
    throw data_error("series has " + std::to_string(vol.nt) +
                     " time points but the checkpoint expects " + std::to_string(t_target));
  if (vol.nt > t_target) vol = trim_time(vol, t_target);
  LabelVolume dummy_labels(vol.nx, vol.ny, vol.nz, 0);
  VoxelMatrix vm = flatten_and_assemble({vol}, {mask}, {dummy_labels}, true);
  Eigen::VectorXd proba =
      predict_proba(ckpt.model, vm.x, s_pred, derive_seed(cfg.seed(), "predict", 0));
  ProbabilityVolume out = scatter_to_volume(vm, 0, proba);
  write_probabilities((fs::path(out_dir) / (vol.patient_id + "_proba.bin")).string(), out);
}

EvaluateOutcome cmd_evaluate(const RunConfig& cfg, const std::string& cohort_dir,
                             const std::string& out_dir, bool ablation) {
  ensure_dir(out_dir);
  PreprocessOutput pre = preprocess_cohort(read_cohort(cohort_dir), cfg.preprocess_config());
  const VoxelMatrix& vm = pre.matrix;
  const int patients = static_cast<int>(vm.patients.size());
  const int s_pred = static_cast<int>(cfg.integer("s_pred"));

  std::vector<VariantSpec> variants;
  if (ablation) {
    variants.push_back({"threshold", false, false, false});
    variants.push_back({"tdgp", true, false, false});
    variants.push_back({"itdgp_post", true, true, false});
    variants.push_back({"itdgp", true, true, true});
  } else {
    variants.push_back({"itdgp", true, true, true});
  }

  // per-fold predictions shared across variants (itdgp and itdgp_post reuse
  // the same balanced training run)
  std::map<std::pair<int, bool>, Eigen::VectorXd> proba_cache;
  auto model_proba = [&](int fold, bool balanced) -> const Eigen::VectorXd& {
    auto key = std::make_pair(fold, balanced);
    auto it = proba_cache.find(key);
    if (it != proba_cache.end()) return it->second;

    Eigen::VectorXd y_train;
    Eigen::MatrixXd x_train = rows_excluding_patient(vm, fold, &y_train);
    Rng init_rng(derive_seed(cfg.seed(), "init", static_cast<std::uint64_t>(fold)));
    DgpModel model = DgpModel::init(cfg.architecture(vm.t()), x_train, init_rng);
    TrainConfig tc = cfg.train_config();
    tc.balanced = balanced;
    fit(model, x_train, y_train, tc);

    const auto& range = vm.patients[static_cast<std::size_t>(fold)];
    Eigen::VectorXd proba = predict_proba(
        model, vm.x.middleRows(range.offset, range.count), s_pred,
        derive_seed(cfg.seed(), "predict", static_cast<std::uint64_t>(fold)));
    return proba_cache.emplace(key, std::move(proba)).first->second;
  };

  EvaluateOutcome outcome;
  for (const auto& variant : variants) {
    auto fold_fn = [&](int fold) -> FoldScore {
      if (!variant.model) {
        Eigen::VectorXd y_train;
        Eigen::MatrixXd x_train = rows_excluding_patient(vm, fold, &y_train);
        double cutoff = tune_enhancement_cutoff(enhancement(x_train), y_train);
        const auto& range = vm.patients[static_cast<std::size_t>(fold)];
        Eigen::VectorXd enh = enhancement(vm.x.middleRows(range.offset, range.count));
        Eigen::VectorXd pred(range.count);
        for (int i = 0; i < range.count; ++i) pred(i) = enh(i) < cutoff ? 1.0 : 0.0;
        return score_prediction(vm, fold, pred, cfg, false);
      }
      return score_prediction(vm, fold, model_proba(fold, variant.balanced), cfg,
                              variant.postprocess);
    };

    EvaluateOutcome::Variant v;
    v.name = variant.name;
    v.result = one_patient_out(patients, fold_fn);
    for (const auto& f : v.result.folds)
      if (!f.ok)
        std::cerr << "warning: fold " << f.patient_id << " failed (" << variant.name
                  << "): " << f.error << "\n";

    std::vector<VolumePair> pairs;
    for (const auto& f : v.result.folds)
      if (f.ok) pairs.push_back({f.true_ml, f.pred_ml});
    try {
      v.r2 = r_squared(pairs, cfg.flag("r2_identity"));
      v.r2_valid = true;
    } catch (const TdgpError&) {
      v.r2_valid = false;
    }

    write_score_csv((fs::path(out_dir) / ("scores_" + variant.name + ".csv")).string(),
                    v.result);
    outcome.variants.push_back(std::move(v));
  }

  // structured text report
  std::ofstream os((fs::path(out_dir) / "summary.txt").string(), std::ios::trunc);
  if (!os) throw io_error("cannot write summary.txt");
  os << "one-patient-out evaluation (" << patients << " patients)\n\n";
  for (const auto& v : outcome.variants) {
    os << "[" << v.name << "]\n";
    auto line = [&](const char* name, const MetricSummary& s) {
      os << "  " << name << " = " << format_double(s.mean) << " (std "
         << format_double(s.stddev) << ")\n";
    };
    line("dsc", v.result.dsc);
    line("jaccard", v.result.jaccard);
    line("precision", v.result.precision);
    line("recall", v.result.recall);
    line("true_ml", v.result.true_ml);
    line("pred_ml", v.result.pred_ml);
    os << "  r2 = " << (v.r2_valid ? format_double(v.r2) : "n/a") << "\n";
    if (v.result.failed_folds > 0)
      os << "  failed_folds = " << v.result.failed_folds << "\n";
    os << "\n";
  }
  os << "config:\n" << cfg.echo();
  if (!os) throw io_error("failed writing summary.txt");
  return outcome;
}

double cmd_gradcheck(const RunConfig& cfg) {
  // small frozen-draw model: H=2, hidden width 3, M=4, N=16
  Rng rng(derive_seed(cfg.seed(), "gradcheck"));
  DgpArchitecture arch;
  arch.input_dim = 5;
  arch.layer_widths = {3, 1};
  arch.inducing_count = 4;
  arch.ard = cfg.flag("ard");
  arch.jitter = cfg.number("jitter");
  Eigen::MatrixXd x = rng.normal_matrix(16, 5);
  DgpModel base = DgpModel::init(arch, x, rng);
  Eigen::VectorXd theta0 = base.pack_params();
  for (Eigen::Index i = 0; i < theta0.size(); ++i) theta0(i) += 0.2 * rng.normal();
  base.unpack_params(theta0);

  Eigen::VectorXd y(16);
  for (int i = 0; i < 16; ++i) y(i) = (i % 3 == 0) ? 1.0 : 0.0;
  std::vector<EpsDraw> frozen;
  frozen.push_back(draw_eps(base, 16, rng));
  frozen.push_back(draw_eps(base, 16, rng));

  auto f = [&](const Eigen::VectorXd& t) {
    DgpModel model = base;
    model.unpack_params(t);
    diff::Tape tape;
    DgpModelVars vars(tape, model, true);
    auto elbo = tape.sub(vars.expected_log_lik(tape.constant(x), y, frozen),
                         vars.kl_total());
    tape.backward(elbo);
    std::vector<diff::Var> pvars;
    vars.append_param_vars(pvars);
    return diff::GradEval{elbo.value()(0, 0), diff::collect_flat_grads(tape, pvars)};
  };
  return diff::grad_check(f, base.pack_params(), 1e-5);
}

}  // namespace tdgp
