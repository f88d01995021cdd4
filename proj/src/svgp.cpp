#include "tdgp/svgp.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "tdgp/errors.hpp"

namespace tdgp {

using diff::Tape;
using diff::Var;

Eigen::MatrixXd mean_projection(int d_in, int d_out) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(d_in, d_out);
  for (int i = 0; i < std::min(d_in, d_out); ++i) p(i, i) = 1.0;
  return p;
}

SvgpLayer SvgpLayer::init(int d_in, int d_out, int m, MeanFunction mean_fn,
                          const Eigen::MatrixXd& candidates, Rng& rng, bool ard,
                          double jitter) {
  if (d_in < 1 || d_out < 1 || m < 1)
    throw data_error("svgp: layer dimensions must be positive");
  if (candidates.cols() != d_in)
    throw data_error("svgp: inducing candidates have " +
                     std::to_string(candidates.cols()) + " columns, expected " +
                     std::to_string(d_in));

  SvgpLayer layer;
  layer.mean_fn = mean_fn;
  layer.kernel = ArdRbfKernel::create(d_in, ard, jitter);
  layer.inducing_inputs.resize(m, d_in);

  const Eigen::Index n = candidates.rows();
  if (n >= m) {
    // distinct rows via partial Fisher-Yates over the row indices
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < m; ++i) {
      std::size_t j = static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
      layer.inducing_inputs.row(i) = candidates.row(idx[static_cast<std::size_t>(i)]);
    }
  } else {
    // not enough rows: reuse with a little noise so Z rows stay distinct
    for (int i = 0; i < m; ++i) {
      layer.inducing_inputs.row(i) = candidates.row(static_cast<Eigen::Index>(
          rng.uniform_index(static_cast<std::uint64_t>(n))));
      for (int j = 0; j < d_in; ++j) layer.inducing_inputs(i, j) += 1e-3 * rng.normal();
    }
  }

  layer.variational_mean = Eigen::MatrixXd::Zero(m, d_out);
  layer.variational_chol_raw.assign(static_cast<std::size_t>(d_out),
                                    Eigen::MatrixXd::Zero(m, m));
  const double log_init = std::log(1e-2);  // L_j = 1e-2 * I
  for (auto& raw : layer.variational_chol_raw) raw.diagonal().setConstant(log_init);
  return layer;
}

Eigen::Index SvgpLayer::param_count() const {
  Eigen::Index c = inducing_inputs.size() + variational_mean.size();
  for (const auto& raw : variational_chol_raw) c += raw.size();
  c += kernel.log_lengthscales.size() + 1;
  return c;
}

namespace {

void pack_matrix(const Eigen::MatrixXd& m, Eigen::VectorXd& out, Eigen::Index& at) {
  out.segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  at += m.size();
}

void unpack_matrix(Eigen::MatrixXd& m, const Eigen::VectorXd& in, Eigen::Index& at) {
  m = Eigen::Map<const Eigen::MatrixXd>(in.data() + at, m.rows(), m.cols());
  at += m.size();
}

}  // namespace

void SvgpLayer::pack_params(Eigen::VectorXd& out, Eigen::Index& at) const {
  pack_matrix(inducing_inputs, out, at);
  pack_matrix(variational_mean, out, at);
  for (const auto& raw : variational_chol_raw) pack_matrix(raw, out, at);
  out.segment(at, kernel.log_lengthscales.size()) = kernel.log_lengthscales;
  at += kernel.log_lengthscales.size();
  out(at++) = kernel.log_signal_variance;
}

void SvgpLayer::unpack_params(const Eigen::VectorXd& in, Eigen::Index& at) {
  unpack_matrix(inducing_inputs, in, at);
  unpack_matrix(variational_mean, in, at);
  for (auto& raw : variational_chol_raw) unpack_matrix(raw, in, at);
  kernel.log_lengthscales = in.segment(at, kernel.log_lengthscales.size());
  at += kernel.log_lengthscales.size();
  kernel.log_signal_variance = in(at++);
}

SvgpLayerVars::SvgpLayerVars(Tape& tape, const SvgpLayer& layer, bool requires_grad)
    : tape_(&tape),
      layer_(&layer),
      t_out_(layer.output_dim()),
      z_(tape.leaf(layer.inducing_inputs, requires_grad)),
      m_(tape.leaf(layer.variational_mean, requires_grad)),
      kernel_(tape, layer.kernel, requires_grad) {
  const int m = layer.inducing_count();
  Eigen::MatrixXd strict_mask = Eigen::MatrixXd::Zero(m, m);
  for (int i = 1; i < m; ++i)
    for (int j = 0; j < i; ++j) strict_mask(i, j) = 1.0;
  Var mask = tape.constant(strict_mask);

  l_raw_.reserve(static_cast<std::size_t>(t_out_));
  l_eff_.reserve(static_cast<std::size_t>(t_out_));
  for (int j = 0; j < t_out_; ++j) {
    Var raw = tape.leaf(layer.variational_chol_raw[static_cast<std::size_t>(j)],
                        requires_grad);
    l_raw_.push_back(raw);
    Var eff = tape.add(tape.mul(raw, mask),
                       tape.diag_embed(tape.exp(tape.diag(raw))));
    l_eff_.push_back(eff);
  }

  Var kzz = kernel_.kmat(z_, z_, true);
  lz_ = cholesky_with_escalation(tape, kzz, layer.kernel.jitter).factor;

  if (layer.mean_fn == MeanFunction::identity)
    prior_mean_z_ = tape.matmul(
        z_, tape.constant(mean_projection(layer.input_dim(), t_out_)));
  else
    prior_mean_z_ = tape.constant(Eigen::MatrixXd::Zero(m, t_out_));
}

SvgpLayerVars::Moments SvgpLayerVars::predict_moments(Var f_in) const {
  Tape& tape = *tape_;
  const Eigen::Index n = f_in.rows();
  const int m = layer_->inducing_count();
  if (f_in.cols() != layer_->input_dim())
    throw data_error("svgp: input has " + std::to_string(f_in.cols()) +
                     " columns, layer expects " + std::to_string(layer_->input_dim()));

  Var kfz = kernel_.kmat(f_in, z_, false);               // N x M
  Var a = tape.tri_solve(lz_, tape.transpose(kfz), false);  // M x N, L^-1 Kzf
  Var w = tape.tri_solve(lz_, a, true);                  // M x N, Kzz^-1 Kzf

  Var prior_mean_f;
  if (layer_->mean_fn == MeanFunction::identity)
    prior_mean_f = tape.matmul(
        f_in, tape.constant(mean_projection(layer_->input_dim(), t_out_)));
  else
    prior_mean_f = tape.constant(Eigen::MatrixXd::Zero(n, t_out_));

  // mean = m_fn(F) + W^T (m - m_fn(Z)), all outputs at once
  Var mean = tape.add(prior_mean_f,
                      tape.matmul(tape.transpose(w), tape.sub(m_, prior_mean_z_)));

  Var ones_m = tape.constant(Eigen::MatrixXd::Ones(1, m));
  Var kff = kernel_.kdiag(f_in);                                   // N x 1
  Var qff = tape.transpose(tape.matmul(ones_m, tape.mul(a, a)));   // N x 1

  // var_j = kdiag(F) - diag(Kfz Kzz^-1 Kzf) + diag(Kfz Kzz^-1 S_j Kzz^-1 Kzf)
  Var var;
  for (int j = 0; j < t_out_; ++j) {
    Var c = tape.matmul(tape.transpose(l_eff_[static_cast<std::size_t>(j)]), w);  // M x N
    Var s = tape.transpose(tape.matmul(ones_m, tape.mul(c, c)));                  // N x 1
    Var vj = tape.clamp_min(tape.add(tape.sub(kff, qff), s), 0.0);
    Eigen::MatrixXd basis_row = Eigen::MatrixXd::Zero(1, t_out_);
    basis_row(0, j) = 1.0;
    Var col = tape.matmul(vj, tape.constant(basis_row));
    var = (j == 0) ? col : tape.add(var, col);
  }
  return {mean, var};
}

Var SvgpLayerVars::sample(const Moments& moments, const Eigen::MatrixXd& eps) const {
  Tape& tape = *tape_;
  if (eps.rows() != moments.mean.rows() || eps.cols() != moments.mean.cols())
    throw data_error("svgp: eps shape (" + std::to_string(eps.rows()) + "x" +
                     std::to_string(eps.cols()) + ") does not match moments (" +
                     std::to_string(moments.mean.rows()) + "x" +
                     std::to_string(moments.mean.cols()) + ")");
  // the tiny floor keeps the sqrt adjoint finite when a variance is clamped at 0
  Var sd = tape.sqrt(tape.clamp_min(moments.var, 1e-300));
  return tape.add(moments.mean, tape.mul(tape.constant(eps), sd));
}

Var SvgpLayerVars::kl() const {
  Tape& tape = *tape_;
  const int m = layer_->inducing_count();
  Var logdet_k = tape.scale(tape.sum(tape.log(tape.diag(lz_))), 2.0);
  Var diff_mean = tape.sub(m_, prior_mean_z_);  // M x T

  Var total;
  for (int j = 0; j < t_out_; ++j) {
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(t_out_, 1);
    basis(j, 0) = 1.0;
    Var dj = tape.matmul(diff_mean, tape.constant(basis));  // M x 1
    Var uj = tape.tri_solve(lz_, dj, false);
    Var quad = tape.sum(tape.mul(uj, uj));
    Var cj = tape.tri_solve(lz_, l_eff_[static_cast<std::size_t>(j)], false);
    Var tr = tape.sum(tape.mul(cj, cj));
    // log|S_j| = 2 * sum of the raw log-diagonal
    Var logdet_s = tape.scale(tape.sum(tape.diag(l_raw_[static_cast<std::size_t>(j)])), 2.0);
    Var kl_j = tape.scale(
        tape.add(tape.sub(tape.add(tr, quad), tape.scalar(static_cast<double>(m))),
                 tape.sub(logdet_k, logdet_s)),
        0.5);
    total = (j == 0) ? kl_j : tape.add(total, kl_j);
  }
  return total;
}

void SvgpLayerVars::append_param_vars(std::vector<Var>& out) const {
  out.push_back(z_);
  out.push_back(m_);
  for (const auto& raw : l_raw_) out.push_back(raw);
  out.push_back(kernel_.log_lengthscales_var());
  out.push_back(kernel_.log_signal_variance_var());
}

LayerMoments predict_moments_eval(const SvgpLayer& layer, const Eigen::MatrixXd& f_in) {
  diff::Tape tape;
  SvgpLayerVars vars(tape, layer, false);
  auto m = vars.predict_moments(tape.constant(f_in));
  return {m.mean.value(), m.var.value()};
}

Eigen::MatrixXd sample_eval(const SvgpLayer& layer, const Eigen::MatrixXd& f_in,
                            const Eigen::MatrixXd& eps) {
  diff::Tape tape;
  SvgpLayerVars vars(tape, layer, false);
  return vars.sample(vars.predict_moments(tape.constant(f_in)), eps).value();
}

double kl_eval(const SvgpLayer& layer) {
  diff::Tape tape;
  SvgpLayerVars vars(tape, layer, false);
  return vars.kl().value()(0, 0);
}

}  // namespace tdgp
