#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tdgp/batching.hpp"
#include "tdgp/diff.hpp"
#include "tdgp/svgp.hpp"

namespace tdgp {

struct DgpArchitecture {
  int input_dim = 0;               // T
  std::vector<int> layer_widths;   // T^(1) .. T^(H), last entry must be 1
  int inducing_count = 64;         // M, shared by all layers
  bool ard = true;
  double jitter = 1e-6;
  // identity-passthrough means on intermediate layers (final layer always
  // zero-mean); `zero` switches every layer to a zero mean
  MeanFunction hidden_mean = MeanFunction::identity;
};

// The H-layer deep GP with a Bernoulli-logistic likelihood on the single
// final output.
struct DgpModel {
  std::vector<SvgpLayer> layers;

  static DgpModel init(const DgpArchitecture& arch, const Eigen::MatrixXd& x_sample,
                       Rng& rng);

  int layer_count() const { return static_cast<int>(layers.size()); }
  int input_dim() const { return layers.front().input_dim(); }

  Eigen::Index param_count() const;
  Eigen::VectorXd pack_params() const;
  void unpack_params(const Eigen::VectorXd& theta);
};

// One set of reparameterization draws for a single forward pass: eps[h] is
// N x T^(h) standard normal.
using EpsDraw = std::vector<Eigen::MatrixXd>;

EpsDraw draw_eps(const DgpModel& model, Eigen::Index n, Rng& rng);

struct ElboReport {
  double expected_log_lik = 0.0;
  double kl_total = 0.0;
  double elbo = 0.0;  // stored exactly as expected_log_lik - kl_total
  std::vector<double> layer_kls;
};

// Model bound to a tape for one objective evaluation.
class DgpModelVars {
 public:
  DgpModelVars(diff::Tape& tape, const DgpModel& model, bool requires_grad);

  // sequential application of sample() through all layers; returns N x 1
  diff::Var forward_sample(diff::Var x, const EpsDraw& eps) const;

  // (1/S) sum_s sum_v [ y_v log sig(f_v^s) + (1-y_v) log(1-sig(f_v^s)) ]
  diff::Var expected_log_lik(diff::Var x, const Eigen::VectorXd& y,
                             const std::vector<EpsDraw>& draws) const;

  diff::Var kl_total() const;
  const std::vector<diff::Var>& layer_kls() const { return layer_kls_; }

  void append_param_vars(std::vector<diff::Var>& out) const;

 private:
  diff::Tape* tape_;
  const DgpModel* model_;
  std::vector<SvgpLayerVars> layers_;
  std::vector<diff::Var> layer_kls_;
};

// Plain evaluations (no gradients).
Eigen::VectorXd forward_sample_eval(const DgpModel& model, const Eigen::MatrixXd& x,
                                    const EpsDraw& eps);
ElboReport elbo_eval(const DgpModel& model, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd& y, const std::vector<EpsDraw>& draws);

struct TrainConfig {
  int epochs = 20;
  double initial_lr = 0.01;  // alpha_0 of the poly schedule
  int mc_train = 1;          // S_train
  int mc_pred = 20;          // S_pred
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool ell_rescale = false;  // multiply the likelihood term by V / V_B
  bool balanced = true;      // false: plain shuffled batches (TDGP ablation)
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;
};

struct TrainState {
  double lr = 0.0;            // alpha_iteration, updated by the poly schedule
  long iteration = 0;         // 1-based after the first step
  long total_iterations = 0;  // E x B
  double ell_scale = 1.0;     // V / V_B when ell_rescale is on
  AdamState adam;

  static TrainState create(const DgpModel& model, const TrainConfig& cfg,
                           long total_iterations);
};

enum class ElboMode { full, kl_only /* likelihood stub, test hook */ };

// One gradient ascent step on the ELBO; advances the poly schedule
//   alpha_s = alpha_{s-1} * (1 - s / total)
// and applies alpha_s as the Adam step size. MC draws are derived from
// (cfg.seed, iteration) unless fixed_draws pins them.
ElboReport train_step(DgpModel& model, const Eigen::MatrixXd& x_batch,
                      const Eigen::VectorXd& y_batch, const TrainConfig& cfg,
                      TrainState& state, ElboMode mode = ElboMode::full,
                      const std::vector<EpsDraw>* fixed_draws = nullptr);

struct TracePoint {
  long iteration = 0;
  double expected_log_lik = 0.0;
  double kl = 0.0;
  double elbo = 0.0;
  double lr = 0.0;
};

struct FitResult {
  std::vector<TracePoint> trace;
  long total_iterations = 0;
};

// E epochs x B balanced batches, one train_step each; deterministic given
// cfg.seed. X is V x T with labels y in {0,1}^V.
FitResult fit(DgpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
              const TrainConfig& cfg);

// (1/S_pred) sum_s sig(f_v^s); deterministic given seed. The eps draws are
// keyed on each voxel's feature bytes, so every probability is a pure
// function of (voxel, seed): row-permutation equivariant and chunk-invariant.
Eigen::VectorXd predict_proba(const DgpModel& model, const Eigen::MatrixXd& x,
                              int s_pred, std::uint64_t seed);

}  // namespace tdgp
