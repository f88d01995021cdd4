#include "tdgp/dgp.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "tdgp/errors.hpp"

namespace tdgp {

using diff::Tape;
using diff::Var;

DgpModel DgpModel::init(const DgpArchitecture& arch, const Eigen::MatrixXd& x_sample,
                        Rng& rng) {
  if (arch.input_dim < 1) throw data_error("dgp: input dimension must be >= 1");
  if (arch.layer_widths.empty() || arch.layer_widths.back() != 1)
    throw data_error("dgp: the final layer must have exactly one output");
  if (x_sample.cols() != arch.input_dim)
    throw data_error("dgp: inducing sample has " + std::to_string(x_sample.cols()) +
                     " columns, expected " + std::to_string(arch.input_dim));

  DgpModel model;
  const int h_count = static_cast<int>(arch.layer_widths.size());
  Eigen::MatrixXd candidates = x_sample;
  int d_in = arch.input_dim;
  for (int h = 0; h < h_count; ++h) {
    int d_out = arch.layer_widths[static_cast<std::size_t>(h)];
    MeanFunction mean_fn =
        (h == h_count - 1) ? MeanFunction::zero : arch.hidden_mean;
    model.layers.push_back(SvgpLayer::init(d_in, d_out, arch.inducing_count, mean_fn,
                                           candidates, rng, arch.ard, arch.jitter));
    // propagate the inducing candidates through the identity projection so
    // deeper layers start in a plausible region of their input space
    candidates = candidates * mean_projection(d_in, d_out);
    d_in = d_out;
  }
  return model;
}

Eigen::Index DgpModel::param_count() const {
  Eigen::Index c = 0;
  for (const auto& l : layers) c += l.param_count();
  return c;
}

Eigen::VectorXd DgpModel::pack_params() const {
  Eigen::VectorXd theta(param_count());
  Eigen::Index at = 0;
  for (const auto& l : layers) l.pack_params(theta, at);
  return theta;
}

void DgpModel::unpack_params(const Eigen::VectorXd& theta) {
  if (theta.size() != param_count())
    throw data_error("dgp: parameter vector has wrong length");
  Eigen::Index at = 0;
  for (auto& l : layers) l.unpack_params(theta, at);
}

EpsDraw draw_eps(const DgpModel& model, Eigen::Index n, Rng& rng) {
  EpsDraw eps;
  eps.reserve(model.layers.size());
  for (const auto& l : model.layers)
    eps.push_back(rng.normal_matrix(n, l.output_dim()));
  return eps;
}

DgpModelVars::DgpModelVars(Tape& tape, const DgpModel& model, bool requires_grad)
    : tape_(&tape), model_(&model) {
  layers_.reserve(model.layers.size());
  layer_kls_.reserve(model.layers.size());
  for (const auto& l : model.layers) {
    layers_.emplace_back(tape, l, requires_grad);
    layer_kls_.push_back(layers_.back().kl());
  }
}

Var DgpModelVars::forward_sample(Var x, const EpsDraw& eps) const {
  if (eps.size() != layers_.size())
    throw data_error("dgp: expected " + std::to_string(layers_.size()) +
                     " eps matrices, got " + std::to_string(eps.size()));
  Var f = x;
  for (std::size_t h = 0; h < layers_.size(); ++h) {
    auto moments = layers_[h].predict_moments(f);
    f = layers_[h].sample(moments, eps[h]);
  }
  return f;
}

Var DgpModelVars::expected_log_lik(Var x, const Eigen::VectorXd& y,
                                   const std::vector<EpsDraw>& draws) const {
  Tape& tape = *tape_;
  if (draws.empty()) throw data_error("dgp: need at least one MC draw");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) != 0.0 && y(i) != 1.0)
      throw data_error("dgp: labels must be 0 or 1");

  Var yv = tape.constant(y);
  Var y_complement = tape.constant((1.0 - y.array()).matrix());
  Var acc;
  for (std::size_t s = 0; s < draws.size(); ++s) {
    Var f = forward_sample(x, draws[s]);
    Var ll = tape.add(tape.sum(tape.mul(yv, tape.log_sigmoid(f))),
                      tape.sum(tape.mul(y_complement, tape.log_sigmoid(tape.scale(f, -1.0)))));
    acc = (s == 0) ? ll : tape.add(acc, ll);
  }
  return tape.scale(acc, 1.0 / static_cast<double>(draws.size()));
}

Var DgpModelVars::kl_total() const {
  Var total = layer_kls_.front();
  for (std::size_t h = 1; h < layer_kls_.size(); ++h)
    total = tape_->add(total, layer_kls_[h]);
  return total;
}

void DgpModelVars::append_param_vars(std::vector<Var>& out) const {
  for (const auto& l : layers_) l.append_param_vars(out);
}

Eigen::VectorXd forward_sample_eval(const DgpModel& model, const Eigen::MatrixXd& x,
                                    const EpsDraw& eps) {
  Tape tape;
  DgpModelVars vars(tape, model, false);
  return vars.forward_sample(tape.constant(x), eps).value().col(0);
}

ElboReport elbo_eval(const DgpModel& model, const Eigen::MatrixXd& x,
                     const Eigen::VectorXd& y, const std::vector<EpsDraw>& draws) {
  Tape tape;
  DgpModelVars vars(tape, model, false);
  ElboReport report;
  report.expected_log_lik =
      vars.expected_log_lik(tape.constant(x), y, draws).value()(0, 0);
  report.kl_total = vars.kl_total().value()(0, 0);
  report.elbo = report.expected_log_lik - report.kl_total;
  for (const auto& k : vars.layer_kls()) report.layer_kls.push_back(k.value()(0, 0));
  return report;
}

TrainState TrainState::create(const DgpModel& model, const TrainConfig& cfg,
                              long total_iterations) {
  TrainState s;
  s.lr = cfg.initial_lr;
  s.total_iterations = total_iterations;
  s.adam.m = Eigen::VectorXd::Zero(model.param_count());
  s.adam.v = Eigen::VectorXd::Zero(model.param_count());
  return s;
}

namespace {

std::string layer_norm_diagnostics(const DgpModel& model) {
  std::ostringstream os;
  for (int h = 0; h < model.layer_count(); ++h) {
    const auto& l = model.layers[static_cast<std::size_t>(h)];
    os << " layer" << h << "(|Z|=" << l.inducing_inputs.norm()
       << ", |m|=" << l.variational_mean.norm() << ")";
  }
  return os.str();
}

}  // namespace

ElboReport train_step(DgpModel& model, const Eigen::MatrixXd& x_batch,
                      const Eigen::VectorXd& y_batch, const TrainConfig& cfg,
                      TrainState& state, ElboMode mode,
                      const std::vector<EpsDraw>* fixed_draws) {
  if (state.iteration >= state.total_iterations)
    throw data_error("train_step: iteration " + std::to_string(state.iteration + 1) +
                     " exceeds total_iterations " + std::to_string(state.total_iterations));
  if (x_batch.rows() != y_batch.size())
    throw data_error("train_step: batch rows and labels disagree");

  const long s = state.iteration + 1;  // 1-based schedule index

  Tape tape;
  DgpModelVars vars(tape, model, true);

  Var kl = vars.kl_total();
  Var objective;
  ElboReport report;
  if (mode == ElboMode::kl_only) {
    objective = tape.scale(kl, -1.0);
    report.expected_log_lik = 0.0;
  } else {
    std::vector<EpsDraw> draws;
    if (fixed_draws == nullptr) {
      Rng eps_rng(derive_seed(cfg.seed, "train-eps", static_cast<std::uint64_t>(s)));
      draws.reserve(static_cast<std::size_t>(cfg.mc_train));
      for (int i = 0; i < cfg.mc_train; ++i)
        draws.push_back(draw_eps(model, x_batch.rows(), eps_rng));
    }
    Var ell = vars.expected_log_lik(tape.constant(x_batch), y_batch,
                                    fixed_draws ? *fixed_draws : draws);
    if (state.ell_scale != 1.0) ell = tape.scale(ell, state.ell_scale);
    objective = tape.sub(ell, kl);
    report.expected_log_lik = ell.value()(0, 0);
  }
  report.kl_total = kl.value()(0, 0);
  report.elbo = report.expected_log_lik - report.kl_total;
  for (const auto& k : vars.layer_kls()) report.layer_kls.push_back(k.value()(0, 0));

  if (!std::isfinite(report.elbo))
    throw numeric_error("train_step: non-finite ELBO at iteration " + std::to_string(s) +
                        ";" + layer_norm_diagnostics(model));

  tape.backward(objective);
  std::vector<Var> pvars;
  vars.append_param_vars(pvars);
  Eigen::VectorXd grad = diff::collect_flat_grads(tape, pvars);
  if (!grad.allFinite())
    throw numeric_error("train_step: non-finite gradient at iteration " + std::to_string(s) +
                        ";" + layer_norm_diagnostics(model));

  // poly schedule: alpha_s = alpha_{s-1} * (1 - s / total)
  state.iteration = s;
  state.lr *= 1.0 - static_cast<double>(s) / static_cast<double>(state.total_iterations);

  // Adam ascent step at the scheduled rate
  AdamState& a = state.adam;
  a.t += 1;
  a.m = cfg.adam_beta1 * a.m + (1.0 - cfg.adam_beta1) * grad;
  a.v = cfg.adam_beta2 * a.v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
  double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(a.t));
  double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(a.t));
  Eigen::VectorXd mhat = a.m / bc1;
  Eigen::VectorXd vhat = a.v / bc2;
  Eigen::VectorXd theta = model.pack_params();
  theta.array() +=
      state.lr * mhat.array() / (vhat.array().sqrt() + cfg.adam_eps);
  model.unpack_params(theta);

  return report;
}

FitResult fit(DgpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
              const TrainConfig& cfg) {
  if (x.rows() == 0) throw data_error("fit: empty dataset");
  if (x.rows() != y.size()) throw data_error("fit: features and labels disagree");
  if (x.cols() != model.input_dim())
    throw data_error("fit: data has " + std::to_string(x.cols()) +
                     " features, model expects " + std::to_string(model.input_dim()));
  if (cfg.epochs < 0) throw data_error("fit: epochs must be >= 0");
  if (cfg.mc_train < 1) throw data_error("fit: mc_train must be >= 1");
  if (!(cfg.initial_lr > 0.0)) throw data_error("fit: initial_lr must be > 0");

  std::vector<std::uint8_t> labels(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw data_error("fit: labels must be 0 or 1");
    labels[static_cast<std::size_t>(i)] = y(i) != 0.0 ? 1 : 0;
  }
  ClassIndex idx = make_class_index(labels);  // rejects single-class data

  const int v_total = static_cast<int>(x.rows());
  const int v_b = idx.batch_size();
  const int b = cfg.balanced ? idx.batch_count() : v_total / v_b;
  if (b < 1) throw data_error("fit: batch size exceeds the dataset");

  FitResult result;
  result.total_iterations = static_cast<long>(cfg.epochs) * b;
  TrainState state = TrainState::create(model, cfg, result.total_iterations);
  if (cfg.ell_rescale)
    state.ell_scale = static_cast<double>(v_total) / static_cast<double>(v_b);

  Eigen::MatrixXd x_batch(v_b, x.cols());
  Eigen::VectorXd y_batch(v_b);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    BatchPlan plan =
        cfg.balanced
            ? make_epoch_batches(idx, derive_seed(cfg.seed, "batch",
                                                  static_cast<std::uint64_t>(epoch)))
            : make_plain_epoch_batches(v_total, v_b,
                                       derive_seed(cfg.seed, "batch",
                                                   static_cast<std::uint64_t>(epoch)));
    for (const auto& batch : plan.batches) {
      for (int i = 0; i < v_b; ++i) {
        x_batch.row(i) = x.row(batch[static_cast<std::size_t>(i)]);
        y_batch(i) = y(batch[static_cast<std::size_t>(i)]);
      }
      ElboReport r = train_step(model, x_batch, y_batch, cfg, state);
      result.trace.push_back({state.iteration, r.expected_log_lik, r.kl_total, r.elbo,
                              state.lr});
    }
  }
  return result;
}

Eigen::VectorXd predict_proba(const DgpModel& model, const Eigen::MatrixXd& x,
                              int s_pred, std::uint64_t seed) {
  if (s_pred < 1) throw data_error("predict_proba: s_pred must be >= 1");
  if (x.cols() != model.input_dim())
    throw data_error("predict_proba: data has " + std::to_string(x.cols()) +
                     " features, model expects " + std::to_string(model.input_dim()));

  // eps draws are keyed on each voxel's feature bytes rather than its row
  // position, so probabilities are a pure function of the voxel (independent
  // across distinct voxels, equivariant under row permutation, and unchanged
  // by chunking)
  const Eigen::Index n = x.rows();
  std::vector<std::uint64_t> row_keys(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::RowVectorXd row = x.row(r);
    std::string_view bytes(reinterpret_cast<const char*>(row.data()),
                           static_cast<std::size_t>(row.size()) * sizeof(double));
    row_keys[static_cast<std::size_t>(r)] = fnv1a64(bytes);
  }

  Eigen::VectorXd proba = Eigen::VectorXd::Zero(n);
  const Eigen::Index chunk = 2048;
  for (Eigen::Index lo = 0; lo < n; lo += chunk) {
    const Eigen::Index m = std::min(chunk, n - lo);
    Eigen::MatrixXd x_chunk = x.middleRows(lo, m);
    for (int s = 0; s < s_pred; ++s) {
      Tape tape;
      DgpModelVars vars(tape, model, false);
      EpsDraw eps;
      for (const auto& layer : model.layers)
        eps.emplace_back(m, layer.output_dim());
      for (Eigen::Index i = 0; i < m; ++i) {
        Rng rng(derive_seed(seed ^ row_keys[static_cast<std::size_t>(lo + i)], "pred-eps",
                            static_cast<std::uint64_t>(s)));
        for (std::size_t h = 0; h < model.layers.size(); ++h)
          for (int j = 0; j < model.layers[h].output_dim(); ++j)
            eps[h](i, j) = rng.normal();
      }
      Var f = vars.forward_sample(tape.constant(x_chunk), eps);
      proba.segment(lo, m) += tape.sigmoid(f).value().col(0);
    }
  }
  return proba / static_cast<double>(s_pred);
}

}  // namespace tdgp
