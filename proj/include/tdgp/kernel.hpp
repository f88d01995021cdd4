#pragma once

#include <Eigen/Core>

#include "tdgp/diff.hpp"

namespace tdgp {

// ARD-RBF covariance with log-parameterized hyperparameters:
//   k(a, b) = sigma_f^2 * exp(-1/2 * sum_d (a_d - b_d)^2 / omega_d)
// With ard=false all omega_d are tied to a single lengthscale, recovering the
// single-omega form. Jitter is added to the diagonal of square kernel
// matrices built from one point set; this module owns all jitter handling.
struct ArdRbfKernel {
  Eigen::VectorXd log_lengthscales;  // D entries when ard, 1 entry when tied
  double log_signal_variance = 0.0;
  double jitter = 1e-6;
  bool ard = true;

  static ArdRbfKernel create(int input_dim, bool ard = true, double jitter = 1e-6);

  int input_dim() const { return ard ? static_cast<int>(log_lengthscales.size()) : -1; }
  double signal_variance() const { return std::exp(log_signal_variance); }
  Eigen::VectorXd lengthscales() const { return log_lengthscales.array().exp(); }
};

// Tape-recorded kernel evaluation; gradients flow to the hyperparameter vars
// and to the input points.
diff::Var kernel_matrix(diff::Tape& tape, diff::Var log_sv, diff::Var log_ls, bool ard,
                        double jitter, diff::Var a, diff::Var b, bool same_points);
diff::Var kernel_diag(diff::Tape& tape, diff::Var log_sv, double jitter, diff::Var a);

// Hyperparameters of one kernel bound to a tape as leaves.
class KernelVars {
 public:
  KernelVars(diff::Tape& tape, const ArdRbfKernel& kernel, bool requires_grad);

  diff::Var kmat(diff::Var a, diff::Var b, bool same_points) const;
  diff::Var kdiag(diff::Var a) const;

  diff::Var log_lengthscales_var() const { return log_ls_; }
  diff::Var log_signal_variance_var() const { return log_sv_; }
  double jitter() const { return jitter_; }

 private:
  diff::Tape* tape_;
  diff::Var log_ls_;
  diff::Var log_sv_;
  double jitter_;
  bool ard_;
};

// Cholesky of a square kernel matrix that already carries base_jitter on its
// diagonal. On failure the jitter is doubled (more identity added) up to
// 8 times before a hard error.
struct JitteredCholesky {
  diff::Var factor;
  double jitter_used = 0.0;
};
JitteredCholesky cholesky_with_escalation(diff::Tape& tape, diff::Var k, double base_jitter);

// Plain (non-differentiated) evaluation, for callers outside the training path.
Eigen::MatrixXd kmat_eval(const ArdRbfKernel& k, const Eigen::MatrixXd& a,
                          const Eigen::MatrixXd& b, bool same_points);
Eigen::VectorXd kdiag_eval(const ArdRbfKernel& k, const Eigen::MatrixXd& a);

}  // namespace tdgp
