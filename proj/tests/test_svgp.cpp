#include "tdgp/svgp.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"
#include "tdgp/rng.hpp"
#include "dense_oracle.hpp"
#include "test_util.hpp"

using namespace tdgp;
using tdgp::testutil::random_matrix;
using tdgp::testutil::DenseOracle;
using tdgp::testutil::random_layer;
using tdgp::testutil::spread_points;

TEST_CASE("predict_moments agrees with the dense oracle over 100 random cases") {
  for (int seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    Rng rng(9000 + static_cast<std::uint64_t>(seed));
    int n = 1 + static_cast<int>(rng.uniform_index(6));  // 1..6
    int m = 1 + static_cast<int>(rng.uniform_index(4));  // 1..4
    int d_in = 1 + static_cast<int>(rng.uniform_index(3));
    int d_out = 1 + static_cast<int>(rng.uniform_index(3));
    auto mean_fn = (seed % 2 == 0) ? MeanFunction::identity : MeanFunction::zero;
    auto layer = random_layer(rng, d_in, d_out, m, mean_fn);
    Eigen::MatrixXd f = random_matrix(rng, n, d_in, -1.5, 1.5);

    LayerMoments got = predict_moments_eval(layer, f);
    LayerMoments want = DenseOracle::moments(layer, f);
    CHECK((got.mean - want.mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((got.var - want.var).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("predict_moments special cases") {
  Rng rng(77);
  SUBCASE("prior-matching variational mean makes the correction vanish") {
    auto layer = random_layer(rng, 2, 2, 3, MeanFunction::identity);
    layer.variational_mean =
        layer.inducing_inputs * mean_projection(2, 2);  // m_j = m_j(Z)
    Eigen::MatrixXd f = random_matrix(rng, 4, 2);
    LayerMoments got = predict_moments_eval(layer, f);
    CHECK((got.mean - f * mean_projection(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("S_j = K_ZZ reduces to the prior conditional variance (N=5, M=3)") {
    auto layer = random_layer(rng, 2, 1, 3, MeanFunction::zero);
    Eigen::MatrixXd kzz = DenseOracle::kmat(layer.kernel, layer.inducing_inputs,
                                            layer.inducing_inputs, true);
    Eigen::MatrixXd l = kzz.llt().matrixL();
    Eigen::MatrixXd raw = Eigen::MatrixXd(l.triangularView<Eigen::StrictlyLower>());
    raw.diagonal() = l.diagonal().array().log();
    layer.variational_chol_raw[0] = raw;

    Eigen::MatrixXd f = random_matrix(rng, 5, 2);
    LayerMoments got = predict_moments_eval(layer, f);
    LayerMoments want = DenseOracle::moments(layer, f);
    CHECK((got.var - want.var).cwiseAbs().maxCoeff() < 1e-8);
    // with S_j = K_ZZ the two correction terms cancel each other exactly
    for (int v = 0; v < 5; ++v) {
      double prior_var = layer.kernel.signal_variance() + layer.kernel.jitter;
      CHECK(got.var(v, 0) == doctest::Approx(prior_var).epsilon(1e-8));
    }
  }
  SUBCASE("at an inducing point with S->0 the mean interpolates and variance vanishes") {
    auto layer = random_layer(rng, 1, 1, 1, MeanFunction::identity);
    layer.kernel.jitter = 1e-12;
    layer.variational_chol_raw[0](0, 0) = std::log(1e-9);  // S ~ 0
    Eigen::MatrixXd f = layer.inducing_inputs;  // F = Z
    LayerMoments got = predict_moments_eval(layer, f);
    LayerMoments want = DenseOracle::moments(layer, f);
    CHECK(got.mean(0, 0) == doctest::Approx(want.mean(0, 0)).epsilon(1e-9));
    // m - m(Z) interpolates with weight Kfz Kzz^-1 ~ 1 at the inducing point
    double expect = f(0, 0) + (layer.variational_mean(0, 0) - layer.inducing_inputs(0, 0));
    CHECK(got.mean(0, 0) == doctest::Approx(expect).epsilon(1e-6));
    CHECK(got.var(0, 0) < 1e-8);
  }
  SUBCASE("rows are permutation-equivariant") {
    auto layer = random_layer(rng, 3, 2, 4, MeanFunction::identity);
    Eigen::MatrixXd f = random_matrix(rng, 5, 3);
    std::vector<int> perm = {3, 0, 4, 1, 2};
    Eigen::MatrixXd fp(5, 3);
    for (int i = 0; i < 5; ++i) fp.row(i) = f.row(perm[i]);
    LayerMoments a = predict_moments_eval(layer, f);
    LayerMoments b = predict_moments_eval(layer, fp);
    for (int i = 0; i < 5; ++i) {
      CHECK((b.mean.row(i) - a.mean.row(perm[i])).cwiseAbs().maxCoeff() < 1e-14);
      CHECK((b.var.row(i) - a.var.row(perm[i])).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
}

TEST_CASE("sample") {
  Rng rng(101);
  auto layer = random_layer(rng, 2, 2, 3, MeanFunction::identity);
  Eigen::MatrixXd f = random_matrix(rng, 4, 2);
  LayerMoments moments = predict_moments_eval(layer, f);

  SUBCASE("eps = 0 returns the predictive mean") {
    Eigen::MatrixXd out = sample_eval(layer, f, Eigen::MatrixXd::Zero(4, 2));
    CHECK((out - moments.mean).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("sample = mean + eps .* sqrt(var)") {
    Eigen::MatrixXd eps = random_matrix(rng, 4, 2);
    Eigen::MatrixXd out = sample_eval(layer, f, eps);
    Eigen::MatrixXd want = moments.mean + eps.cwiseProduct(moments.var.cwiseSqrt());
    CHECK((out - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("shape mismatch rejected") {
    CHECK_THROWS_AS(sample_eval(layer, f, Eigen::MatrixXd::Zero(4, 3)), TdgpError);
  }
  SUBCASE("empirical moments over 1e5 draws match within 3 standard errors") {
    const int total_draws = 100000;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(4, 2);
    Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(4, 2);
    Rng draw_rng(555);
    for (int chunk = 0; chunk < 100; ++chunk) {
      diff::Tape tape;
      SvgpLayerVars vars(tape, layer, false);
      auto m = vars.predict_moments(tape.constant(f));
      for (int i = 0; i < total_draws / 100; ++i) {
        Eigen::MatrixXd s = vars.sample(m, draw_rng.normal_matrix(4, 2)).value();
        sum += s;
        sumsq += s.cwiseProduct(s);
      }
    }
    Eigen::MatrixXd emp_mean = sum / total_draws;
    Eigen::MatrixXd emp_var =
        sumsq / total_draws - emp_mean.cwiseProduct(emp_mean);
    for (int v = 0; v < 4; ++v) {
      for (int j = 0; j < 2; ++j) {
        double se_mean = std::sqrt(moments.var(v, j) / total_draws);
        CHECK(std::abs(emp_mean(v, j) - moments.mean(v, j)) < 3.0 * se_mean);
        double se_var = moments.var(v, j) * std::sqrt(2.0 / (total_draws - 1));
        CHECK(std::abs(emp_var(v, j) - moments.var(v, j)) < 3.0 * se_var);
      }
    }
  }
}

TEST_CASE("layer KL") {
  SUBCASE("prior-matching parameters give KL = 0 within 1e-10") {
    Rng rng(131);
    auto layer = random_layer(rng, 2, 2, 4, MeanFunction::identity);
    layer.variational_mean = layer.inducing_inputs * mean_projection(2, 2);
    Eigen::MatrixXd kzz = DenseOracle::kmat(layer.kernel, layer.inducing_inputs,
                                            layer.inducing_inputs, true);
    Eigen::MatrixXd l = kzz.llt().matrixL();
    for (auto& raw : layer.variational_chol_raw) {
      raw = Eigen::MatrixXd(l.triangularView<Eigen::StrictlyLower>());
      raw.diagonal() = l.diagonal().array().log();
    }
    CHECK(std::abs(kl_eval(layer)) < 1e-10);
  }
  SUBCASE("scalar closed form: M=1, K=1, S=1, offset 2 gives 2.0") {
    Rng rng(132);
    auto layer = SvgpLayer::init(1, 1, 1, MeanFunction::zero,
                                 Eigen::MatrixXd::Zero(1, 1), rng, true, 0.0);
    layer.kernel.log_signal_variance = 0.0;  // K = k(z,z) = 1
    layer.variational_chol_raw[0](0, 0) = 0.0;  // L = 1, S = 1
    layer.variational_mean(0, 0) = 2.0;
    CHECK(kl_eval(layer) == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("matches the naive dense formula to 1e-8") {
    for (int seed = 0; seed < 50; ++seed) {
      CAPTURE(seed);
      Rng rng(7000 + static_cast<std::uint64_t>(seed));
      int m = 1 + static_cast<int>(rng.uniform_index(4));
      int d_out = 1 + static_cast<int>(rng.uniform_index(3));
      auto layer = random_layer(rng, 2, d_out, m,
                                seed % 2 ? MeanFunction::zero : MeanFunction::identity);
      CHECK(std::abs(kl_eval(layer) - DenseOracle::kl(layer)) < 1e-8);
    }
  }
  SUBCASE("KL >= 0 for 1000 random parameterizations") {
    for (int seed = 0; seed < 1000; ++seed) {
      CAPTURE(seed);
      Rng rng(20000 + static_cast<std::uint64_t>(seed));
      int m = 1 + static_cast<int>(rng.uniform_index(5));
      auto layer = random_layer(rng, 2, 1 + static_cast<int>(rng.uniform_index(2)), m,
                                seed % 2 ? MeanFunction::zero : MeanFunction::identity);
      CHECK(kl_eval(layer) >= -1e-10);
    }
  }
}

TEST_CASE("layer gradients pass grad_check at 1e-3") {
  Rng rng(141);
  auto base = random_layer(rng, 2, 2, 3, MeanFunction::identity);
  Eigen::MatrixXd f = random_matrix(rng, 4, 2);

  enum class Objective { kl, mean_sum, var_sum };
  auto make_fn = [&](Objective obj) {
    return [&, obj](const Eigen::VectorXd& t) {
      SvgpLayer layer = base;
      Eigen::Index at = 0;
      layer.unpack_params(t, at);
      diff::Tape tape;
      SvgpLayerVars vars(tape, layer, true);
      diff::Var y;
      if (obj == Objective::kl) {
        y = vars.kl();
      } else {
        auto m = vars.predict_moments(tape.constant(f));
        y = tape.sum(obj == Objective::mean_sum ? m.mean : m.var);
      }
      tape.backward(y);
      std::vector<diff::Var> pvars;
      vars.append_param_vars(pvars);
      diff::GradEval g;
      g.value = y.value()(0, 0);
      g.grad = diff::collect_flat_grads(tape, pvars);
      return g;
    };
  };

  Eigen::VectorXd theta(base.param_count());
  Eigen::Index at = 0;
  base.pack_params(theta, at);
  REQUIRE(at == theta.size());

  CHECK(diff::grad_check(make_fn(Objective::kl), theta, 1e-5) < 1e-3);
  CHECK(diff::grad_check(make_fn(Objective::mean_sum), theta, 1e-5) < 1e-3);
  CHECK(diff::grad_check(make_fn(Objective::var_sum), theta, 1e-5) < 1e-3);
}
