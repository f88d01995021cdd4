#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "tdgp/rng.hpp"
#include "tdgp/svgp.hpp"
#include "test_util.hpp"

namespace tdgp::testutil {

using tdgp::testutil::random_matrix;

// Dense brute-force evaluation of the layer equations with explicit inverses
// and elementwise kernel entries; the oracle shares no linear algebra with the
// implementation's Cholesky/solve path.
struct DenseOracle {
  static double kentry(const ArdRbfKernel& k, const Eigen::RowVectorXd& a,
                       const Eigen::RowVectorXd& b) {
    double s = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
      double w = std::exp(k.log_lengthscales(k.ard ? d : 0));
      double diff = a(d) - b(d);
      s += diff * diff / w;
    }
    return std::exp(k.log_signal_variance) * std::exp(-0.5 * s);
  }

  static Eigen::MatrixXd kmat(const ArdRbfKernel& k, const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& b, bool jitter_diag) {
    Eigen::MatrixXd out(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < b.rows(); ++j)
        out(i, j) = kentry(k, a.row(i), b.row(j));
    if (jitter_diag) out.diagonal().array() += k.jitter;
    return out;
  }

  static Eigen::MatrixXd chol_of_raw(const Eigen::MatrixXd& raw) {
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
      for (Eigen::Index j = 0; j < i; ++j) l(i, j) = raw(i, j);
      l(i, i) = std::exp(raw(i, i));
    }
    return l;
  }

  static Eigen::MatrixXd prior_mean(const SvgpLayer& layer, const Eigen::MatrixXd& x) {
    if (layer.mean_fn == MeanFunction::zero)
      return Eigen::MatrixXd::Zero(x.rows(), layer.output_dim());
    return x * mean_projection(static_cast<int>(x.cols()), layer.output_dim());
  }

  static LayerMoments moments(const SvgpLayer& layer, const Eigen::MatrixXd& f) {
    Eigen::MatrixXd kzz_inv = kmat(layer.kernel, layer.inducing_inputs,
                                   layer.inducing_inputs, true)
                                  .inverse();
    Eigen::MatrixXd kfz = kmat(layer.kernel, f, layer.inducing_inputs, false);
    Eigen::MatrixXd mu_f = prior_mean(layer, f);
    Eigen::MatrixXd mu_z = prior_mean(layer, layer.inducing_inputs);

    LayerMoments out;
    out.mean.resize(f.rows(), layer.output_dim());
    out.var.resize(f.rows(), layer.output_dim());
    for (int j = 0; j < layer.output_dim(); ++j) {
      Eigen::VectorXd mj = layer.variational_mean.col(j);
      Eigen::MatrixXd lj = chol_of_raw(layer.variational_chol_raw[static_cast<std::size_t>(j)]);
      Eigen::MatrixXd sj = lj * lj.transpose();
      out.mean.col(j) = mu_f.col(j) + kfz * kzz_inv * (mj - mu_z.col(j));
      Eigen::MatrixXd kzz = kmat(layer.kernel, layer.inducing_inputs,
                                 layer.inducing_inputs, true);
      Eigen::MatrixXd cov = kfz * kzz_inv * (kzz - sj) * kzz_inv * kfz.transpose();
      for (Eigen::Index v = 0; v < f.rows(); ++v) {
        double kff = std::exp(layer.kernel.log_signal_variance) + layer.kernel.jitter;
        out.var(v, j) = std::max(0.0, kff - cov(v, v));
      }
    }
    return out;
  }

  static double kl(const SvgpLayer& layer) {
    Eigen::MatrixXd kzz = kmat(layer.kernel, layer.inducing_inputs,
                               layer.inducing_inputs, true);
    Eigen::MatrixXd kinv = kzz.inverse();
    Eigen::MatrixXd mu_z = prior_mean(layer, layer.inducing_inputs);
    const double m = static_cast<double>(layer.inducing_count());
    double total = 0.0;
    for (int j = 0; j < layer.output_dim(); ++j) {
      Eigen::MatrixXd lj = chol_of_raw(layer.variational_chol_raw[static_cast<std::size_t>(j)]);
      Eigen::MatrixXd sj = lj * lj.transpose();
      Eigen::VectorXd d = mu_z.col(j) - layer.variational_mean.col(j);
      total += 0.5 * ((kinv * sj).trace() + d.dot(kinv * d) - m +
                      std::log(kzz.determinant()) - std::log(sj.determinant()));
    }
    return total;
  }
};

// Inducing rows are kept apart so K_ZZ stays well-conditioned; the oracle's
// explicit inverse loses digits on nearly-duplicate rows.
Eigen::MatrixXd spread_points(Rng& rng, int m, int d, double min_dist) {
  Eigen::MatrixXd z(m, d);
  for (int i = 0; i < m; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      Eigen::RowVectorXd row = random_matrix(rng, 1, d, -1.5, 1.5);
      bool ok = true;
      for (int k = 0; k < i; ++k)
        if ((z.row(k) - row).norm() < min_dist) ok = false;
      if (ok || attempt == 199) {
        z.row(i) = row;
        break;
      }
    }
  }
  return z;
}

// Inducing rows are kept apart so K_ZZ stays well-conditioned; the oracle's
// explicit inverse loses digits on nearly-duplicate rows.
SvgpLayer random_layer(Rng& rng, int d_in, int d_out, int m, MeanFunction mean_fn) {
  auto layer = SvgpLayer::init(d_in, d_out, m, mean_fn,
                               spread_points(rng, std::max(m, 6), d_in, 0.5), rng,
                               true, 1e-6);
  layer.kernel.log_signal_variance = rng.uniform(-0.5, 0.7);
  for (Eigen::Index d = 0; d < layer.kernel.log_lengthscales.size(); ++d)
    layer.kernel.log_lengthscales(d) = rng.uniform(-0.7, 0.7);
  layer.variational_mean = random_matrix(rng, m, d_out);
  for (auto& raw : layer.variational_chol_raw) {
    raw = random_matrix(rng, m, m, -0.4, 0.4);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = i + 1; j < m; ++j) raw(i, j) = 0.0;
    raw.diagonal() = random_matrix(rng, m, 1, -1.5, 0.3);
  }
  return layer;
}


}  // namespace tdgp::testutil
