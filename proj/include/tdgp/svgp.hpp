#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tdgp/diff.hpp"
#include "tdgp/kernel.hpp"
#include "tdgp/rng.hpp"

namespace tdgp {

enum class MeanFunction : std::uint8_t { zero = 0, identity = 1 };

// One sparse variational GP layer: M inducing inputs Z shared by all T_out
// output dimensions, with an independent Gaussian q(u_j) = N(m_j, S_j) per
// output. S_j is parameterized by its Cholesky factor; the raw factor stores
// the strict lower triangle as-is and the diagonal in log-space, so S_j stays
// positive definite under unconstrained updates.
struct SvgpLayer {
  Eigen::MatrixXd inducing_inputs;                  // M x D_in
  Eigen::MatrixXd variational_mean;                 // M x T_out, column j = m_j
  std::vector<Eigen::MatrixXd> variational_chol_raw;  // T_out matrices, M x M
  ArdRbfKernel kernel;
  MeanFunction mean_fn = MeanFunction::identity;

  int input_dim() const { return static_cast<int>(inducing_inputs.cols()); }
  int output_dim() const { return static_cast<int>(variational_mean.cols()); }
  int inducing_count() const { return static_cast<int>(inducing_inputs.rows()); }

  // Z drawn from the rows of `candidates` (distinct rows when enough are
  // available); m_j = 0; L_j = 1e-2 * I.
  static SvgpLayer init(int d_in, int d_out, int m, MeanFunction mean_fn,
                        const Eigen::MatrixXd& candidates, Rng& rng, bool ard,
                        double jitter);

  // Flat parameter layout, also the checkpoint order:
  // Z, m, raw_L[0..T_out-1], log_lengthscales, log_signal_variance.
  Eigen::Index param_count() const;
  void pack_params(Eigen::VectorXd& out, Eigen::Index& at) const;
  void unpack_params(const Eigen::VectorXd& in, Eigen::Index& at);
};

// The identity-or-truncated-linear mean maps D_in columns onto D_out columns
// by copy/truncate/zero-pad; zero mean returns zeros.
Eigen::MatrixXd mean_projection(int d_in, int d_out);

struct LayerMoments {
  Eigen::MatrixXd mean;  // N x T_out
  Eigen::MatrixXd var;   // N x T_out, per-point diagonal variances, >= 0
};

// One layer bound to a tape. K_ZZ and its Cholesky factor are built once at
// construction and shared by the moment and KL paths.
class SvgpLayerVars {
 public:
  struct Moments {
    diff::Var mean;
    diff::Var var;
  };

  SvgpLayerVars(diff::Tape& tape, const SvgpLayer& layer, bool requires_grad);

  Moments predict_moments(diff::Var f_in) const;

  // F = mean + eps .* sqrt(var), elementwise; eps is N x T_out.
  diff::Var sample(const Moments& moments, const Eigen::MatrixXd& eps) const;

  // sum over outputs of KL( N(m_j, S_j) || N(prior_mean_j(Z), K_ZZ) )
  diff::Var kl() const;

  // parameter leaves in the flat layout order
  void append_param_vars(std::vector<diff::Var>& out) const;

  int output_dim() const { return t_out_; }

 private:
  diff::Tape* tape_;
  const SvgpLayer* layer_;
  int t_out_;
  diff::Var z_;
  diff::Var m_;
  std::vector<diff::Var> l_raw_;
  std::vector<diff::Var> l_eff_;  // strict lower + exp(diagonal)
  KernelVars kernel_;
  diff::Var lz_;            // Cholesky factor of K_ZZ (+ escalated jitter)
  diff::Var prior_mean_z_;  // M x T_out
};

// Plain-value wrappers for callers outside the differentiated path.
LayerMoments predict_moments_eval(const SvgpLayer& layer, const Eigen::MatrixXd& f_in);
Eigen::MatrixXd sample_eval(const SvgpLayer& layer, const Eigen::MatrixXd& f_in,
                            const Eigen::MatrixXd& eps);
double kl_eval(const SvgpLayer& layer);

}  // namespace tdgp
