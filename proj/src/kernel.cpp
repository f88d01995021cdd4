#include "tdgp/kernel.hpp"

#include <string>

#include "tdgp/errors.hpp"

namespace tdgp {

using diff::Tape;
using diff::Var;

ArdRbfKernel ArdRbfKernel::create(int input_dim, bool ard, double jitter) {
  if (input_dim < 1) throw data_error("kernel: input dimension must be >= 1");
  if (jitter < 0.0) throw data_error("kernel: jitter must be >= 0");
  ArdRbfKernel k;
  k.ard = ard;
  k.jitter = jitter;
  k.log_lengthscales = Eigen::VectorXd::Zero(ard ? input_dim : 1);
  k.log_signal_variance = 0.0;
  return k;
}

namespace {

void check_dims(const char* op, Eigen::Index cols, Eigen::Index ls, bool ard) {
  if (ard && cols != ls)
    throw data_error(std::string(op) + ": input has " + std::to_string(cols) +
                     " columns but kernel has " + std::to_string(ls) + " lengthscales");
}

}  // namespace

Var kernel_matrix(Tape& tape, Var log_sv, Var log_ls, bool ard, double jitter,
                  Var a, Var b, bool same_points) {
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.rows();
  const Eigen::Index d = a.cols();
  if (b.cols() != d)
    throw data_error("kmat: point sets have " + std::to_string(d) + " and " +
                     std::to_string(b.cols()) + " columns");
  check_dims("kmat", d, log_ls.rows(), ard);

  Var inv_omega = tape.exp(tape.scale(log_ls, -1.0));  // D x 1 (or 1 x 1 tied)
  Var sqdist;
  if (ard) {
    Var inv_row = tape.transpose(inv_omega);
    Var wa = tape.matmul(tape.constant(Eigen::MatrixXd::Ones(n, 1)), inv_row);
    Var aw = tape.mul(a, wa);
    Var a2 = tape.matmul(tape.mul(aw, a), tape.constant(Eigen::MatrixXd::Ones(d, 1)));
    Var wb = tape.matmul(tape.constant(Eigen::MatrixXd::Ones(m, 1)), inv_row);
    Var b2 = tape.matmul(tape.mul(tape.mul(b, wb), b),
                         tape.constant(Eigen::MatrixXd::Ones(d, 1)));
    Var cross = tape.matmul(aw, tape.transpose(b));
    sqdist = tape.sub(
        tape.add(tape.matmul(a2, tape.constant(Eigen::MatrixXd::Ones(1, m))),
                 tape.matmul(tape.constant(Eigen::MatrixXd::Ones(n, 1)), tape.transpose(b2))),
        tape.scale(cross, 2.0));
  } else {
    Var a2 = tape.matmul(tape.mul(a, a), tape.constant(Eigen::MatrixXd::Ones(d, 1)));
    Var b2 = tape.matmul(tape.mul(b, b), tape.constant(Eigen::MatrixXd::Ones(d, 1)));
    Var cross = tape.matmul(a, tape.transpose(b));
    Var raw = tape.sub(
        tape.add(tape.matmul(a2, tape.constant(Eigen::MatrixXd::Ones(1, m))),
                 tape.matmul(tape.constant(Eigen::MatrixXd::Ones(n, 1)), tape.transpose(b2))),
        tape.scale(cross, 2.0));
    sqdist = tape.mul(raw, inv_omega);
  }
  // roundoff can push squared distances a hair below zero
  sqdist = tape.clamp_min(sqdist, 0.0);

  Var k = tape.mul(tape.exp(tape.scale(sqdist, -0.5)), tape.exp(log_sv));
  if (same_points && jitter > 0.0) {
    if (n != m) throw data_error("kmat: same_points requires square output");
    k = tape.add(k, tape.constant(jitter * Eigen::MatrixXd::Identity(n, n)));
  }
  return k;
}

Var kernel_diag(Tape& tape, Var log_sv, double jitter, Var a) {
  const Eigen::Index n = a.rows();
  Var ones = tape.constant(Eigen::MatrixXd::Ones(n, 1));
  Var d = tape.mul(ones, tape.exp(log_sv));
  if (jitter > 0.0)
    d = tape.add(d, tape.constant(Eigen::MatrixXd::Constant(n, 1, jitter)));
  return d;
}

KernelVars::KernelVars(Tape& tape, const ArdRbfKernel& kernel, bool requires_grad)
    : tape_(&tape),
      log_ls_(tape.leaf(kernel.log_lengthscales, requires_grad)),
      log_sv_(tape.leaf(Eigen::MatrixXd::Constant(1, 1, kernel.log_signal_variance),
                        requires_grad)),
      jitter_(kernel.jitter),
      ard_(kernel.ard) {
  if (kernel.jitter < 0.0) throw data_error("kernel: jitter must be >= 0");
}

Var KernelVars::kmat(Var a, Var b, bool same_points) const {
  return kernel_matrix(*tape_, log_sv_, log_ls_, ard_, jitter_, a, b, same_points);
}

Var KernelVars::kdiag(Var a) const { return kernel_diag(*tape_, log_sv_, jitter_, a); }

JitteredCholesky cholesky_with_escalation(Tape& tape, Var k, double base_jitter) {
  double total = base_jitter;
  Var current = k;
  for (int attempt = 0;; ++attempt) {
    try {
      return {tape.cholesky(current), total};
    } catch (const TdgpError&) {
      if (attempt >= 8)
        throw numeric_error(
            "cholesky: matrix not positive definite after escalating jitter to " +
            std::to_string(total));
      double target = std::max(base_jitter, 1e-12) * static_cast<double>(1 << (attempt + 1));
      double extra = target - total;
      total = target;
      Eigen::Index n = current.rows();
      current = tape.add(current, tape.constant(extra * Eigen::MatrixXd::Identity(n, n)));
    }
  }
}

Eigen::MatrixXd kmat_eval(const ArdRbfKernel& k, const Eigen::MatrixXd& a,
                          const Eigen::MatrixXd& b, bool same_points) {
  diff::Tape tape;
  KernelVars kv(tape, k, false);
  return kv.kmat(tape.constant(a), tape.constant(b), same_points).value();
}

Eigen::VectorXd kdiag_eval(const ArdRbfKernel& k, const Eigen::MatrixXd& a) {
  diff::Tape tape;
  KernelVars kv(tape, k, false);
  return kv.kdiag(tape.constant(a)).value().col(0);
}

}  // namespace tdgp
