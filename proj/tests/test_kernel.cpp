#include "tdgp/kernel.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"
#include "tdgp/rng.hpp"
#include "test_util.hpp"

using namespace tdgp;
using tdgp::testutil::random_matrix;

TEST_CASE("kmat closed-form values") {
  SUBCASE("identical points give sigma_f^2, plus jitter on the diagonal") {
    auto k = ArdRbfKernel::create(3, true, 1e-6);
    k.log_signal_variance = std::log(2.5);
    Eigen::MatrixXd a(2, 3);
    a << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;  // two identical rows
    Eigen::MatrixXd km = kmat_eval(k, a, a, true);
    CHECK(km(0, 1) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(km(0, 0) == doctest::Approx(2.5 + 1e-6).epsilon(1e-12));
  }
  SUBCASE("unit kernel at squared distance 2 is exp(-1)") {
    auto k = ArdRbfKernel::create(1, true, 0.0);
    Eigen::MatrixXd a(1, 1), b(1, 1);
    a << 0.0;
    b << std::sqrt(2.0);
    CHECK(kmat_eval(k, a, b, false)(0, 0) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("doubling a lengthscale halves that dimension's exponent") {
    Eigen::MatrixXd a(1, 2), b(1, 2);
    a << 0.0, 0.7;
    b << 0.0, -0.9;  // separation only in dimension 1
    auto k1 = ArdRbfKernel::create(2, true, 0.0);
    auto k2 = k1;
    k2.log_lengthscales(1) = std::log(2.0);
    double e1 = std::log(kmat_eval(k1, a, b, false)(0, 0));
    double e2 = std::log(kmat_eval(k2, a, b, false)(0, 0));
    CHECK(e2 == doctest::Approx(0.5 * e1).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch is rejected") {
    auto k = ArdRbfKernel::create(3);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(kmat_eval(k, a, a, true), TdgpError);
  }
}

TEST_CASE("kdiag") {
  auto k = ArdRbfKernel::create(4, true, 1e-6);
  k.log_signal_variance = std::log(2.0);
  Rng rng(3);
  Eigen::MatrixXd a = random_matrix(rng, 5, 4);

  Eigen::VectorXd d = kdiag_eval(k, a);
  CHECK(d.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(d(i) == doctest::Approx(2.000001).epsilon(1e-12));

  SUBCASE("empty input gives empty diagonal") {
    CHECK(kdiag_eval(k, Eigen::MatrixXd(0, 4)).size() == 0);
  }
  SUBCASE("matches the diagonal of kmat(A,A)") {
    Eigen::MatrixXd km = kmat_eval(k, a, a, true);
    CHECK((km.diagonal() - d).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("kernel invariants") {
  SUBCASE("kmat(A,A) with jitter passes Cholesky over 100 seeds") {
    for (int seed = 0; seed < 100; ++seed) {
      CAPTURE(seed);
      Rng rng(500 + static_cast<std::uint64_t>(seed));
      int n = 5 + static_cast<int>(rng.uniform_index(46));  // 5..50
      int d = 1 + static_cast<int>(rng.uniform_index(6));
      auto k = ArdRbfKernel::create(d, true, 1e-6);
      k.log_signal_variance = std::log(rng.uniform(0.1, 10.0));
      for (int j = 0; j < d; ++j) k.log_lengthscales(j) = std::log(rng.uniform(0.1, 10.0));
      Eigen::MatrixXd a = random_matrix(rng, n, d, -2.0, 2.0);
      Eigen::LLT<Eigen::MatrixXd> llt(kmat_eval(k, a, a, true));
      CHECK(llt.info() == Eigen::Success);
    }
  }
  SUBCASE("kmat(A,B) is the transpose of kmat(B,A)") {
    Rng rng(17);
    auto k = ArdRbfKernel::create(3);
    k.log_lengthscales << 0.2, -0.4, 0.9;
    Eigen::MatrixXd a = random_matrix(rng, 6, 3);
    Eigen::MatrixXd b = random_matrix(rng, 4, 3);
    Eigen::MatrixXd kab = kmat_eval(k, a, b, false);
    Eigen::MatrixXd kba = kmat_eval(k, b, a, false);
    CHECK((kab - kba.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("permuting dimensions together with lengthscales leaves K unchanged") {
    Rng rng(29);
    auto k = ArdRbfKernel::create(4);
    k.log_lengthscales << 0.1, -0.3, 0.7, -1.1;
    Eigen::MatrixXd a = random_matrix(rng, 5, 4);
    Eigen::MatrixXd b = random_matrix(rng, 3, 4);
    std::vector<int> perm = {2, 0, 3, 1};
    auto kp = ArdRbfKernel::create(4);
    Eigen::MatrixXd ap(5, 4), bp(3, 4);
    for (int j = 0; j < 4; ++j) {
      kp.log_lengthscales(j) = k.log_lengthscales(perm[j]);
      ap.col(j) = a.col(perm[j]);
      bp.col(j) = b.col(perm[j]);
    }
    Eigen::MatrixXd k0 = kmat_eval(k, a, b, false);
    Eigen::MatrixXd k1 = kmat_eval(kp, ap, bp, false);
    CHECK((k0 - k1).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("ard=false ties all lengthscales (single-omega form)") {
    Rng rng(31);
    auto tied = ArdRbfKernel::create(3, false, 0.0);
    tied.log_lengthscales(0) = 0.6;
    auto ard = ArdRbfKernel::create(3, true, 0.0);
    ard.log_lengthscales.setConstant(0.6);
    Eigen::MatrixXd a = random_matrix(rng, 4, 3);
    Eigen::MatrixXd b = random_matrix(rng, 5, 3);
    CHECK((kmat_eval(tied, a, b, false) - kmat_eval(ard, a, b, false))
              .cwiseAbs()
              .maxCoeff() < 1e-13);
  }
}

TEST_CASE("kernel gradients pass finite differences") {
  Rng rng(41);
  Eigen::MatrixXd a0 = random_matrix(rng, 4, 3);
  Eigen::MatrixXd b0 = random_matrix(rng, 3, 3);

  // theta = [log_sv, log_ls(3), vec(A), vec(B)]
  auto f = [&](const Eigen::VectorXd& t) {
    diff::Tape tape;
    auto log_sv = tape.leaf(Eigen::MatrixXd::Constant(1, 1, t(0)), true);
    auto log_ls = tape.leaf(Eigen::Map<const Eigen::MatrixXd>(t.data() + 1, 3, 1), true);
    auto a = tape.leaf(Eigen::Map<const Eigen::MatrixXd>(t.data() + 4, 4, 3), true);
    auto b = tape.leaf(Eigen::Map<const Eigen::MatrixXd>(t.data() + 16, 3, 3), true);
    auto k = kernel_matrix(tape, log_sv, log_ls, true, 0.0, a, b, false);
    auto y = tape.sum(tape.mul(k, k));
    tape.backward(y);
    diff::GradEval g;
    g.value = y.value()(0, 0);
    g.grad.resize(t.size());
    g.grad(0) = tape.grad(log_sv)(0, 0);
    g.grad.segment(1, 3) = tape.grad(log_ls).col(0);
    Eigen::MatrixXd ga = tape.grad(a);
    Eigen::MatrixXd gb = tape.grad(b);
    g.grad.segment(4, 12) = Eigen::Map<const Eigen::VectorXd>(ga.data(), 12);
    g.grad.segment(16, 9) = Eigen::Map<const Eigen::VectorXd>(gb.data(), 9);
    return g;
  };

  Eigen::VectorXd theta(25);
  theta(0) = 0.3;
  theta.segment(1, 3) << 0.1, -0.2, 0.4;
  theta.segment(4, 12) = Eigen::Map<const Eigen::VectorXd>(a0.data(), 12);
  theta.segment(16, 9) = Eigen::Map<const Eigen::VectorXd>(b0.data(), 9);
  CHECK(diff::grad_check(f, theta, 1e-5) < 1e-6);
}

TEST_CASE("cholesky jitter escalation") {
  diff::Tape tape;
  SUBCASE("well-conditioned matrix keeps base jitter") {
    Rng rng(51);
    auto spd = tape.constant(tdgp::testutil::random_spd(rng, 4));
    auto r = cholesky_with_escalation(tape, spd, 1e-6);
    CHECK(r.jitter_used == doctest::Approx(1e-6));
  }
  SUBCASE("rank-deficient matrix succeeds after escalation") {
    // exactly singular: ones * ones^T
    Eigen::MatrixXd low = Eigen::MatrixXd::Ones(3, 3);
    auto v = tape.constant(low);
    auto r = cholesky_with_escalation(tape, v, 1e-6);
    CHECK(r.jitter_used > 1e-6);
    Eigen::MatrixXd l = r.factor.value();
    CHECK((l * l.transpose() - low).cwiseAbs().maxCoeff() < 1e-3);
  }
  SUBCASE("hopeless matrix errors after 8 doublings") {
    Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(cholesky_with_escalation(tape, tape.constant(bad), 1e-6), TdgpError);
  }
}
