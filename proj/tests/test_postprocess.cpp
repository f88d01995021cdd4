#include "tdgp/postprocess.hpp"

#include <cmath>

#include "doctest.h"
#include "tdgp/rng.hpp"

using namespace tdgp;

namespace {

ProbabilityMap full_mask_map(int n, double fill = 0.0) {
  ProbabilityMap map;
  map.values = ProbabilityVolume(n, n, 1, fill);
  map.mask = MaskVolume(n, n, 1, 1);
  return map;
}

double lognormal_pdf(double d, double mu, double sigma) {
  if (d <= 0.0) return 0.0;
  double z = (std::log(d) - mu) / sigma;
  return std::exp(-0.5 * z * z) / (d * sigma * std::sqrt(2.0 * M_PI));
}

}  // namespace

TEST_CASE("build_kernel") {
  SUBCASE("weights sum to 1 and match direct pdf tabulation") {
    for (auto [mu, sigma, r] : {std::tuple{0.0, 0.75, 3}, {0.3, 0.5, 4}, {0.0, 0.2, 3}}) {
      auto k = LognormalKernel2D::build(mu, sigma, r);
      CHECK(std::abs(k.weights.sum() - 1.0) < 1e-12);

      Eigen::MatrixXd direct(2 * r + 1, 2 * r + 1);
      double max_neighbor = 0.0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          double d = std::sqrt(static_cast<double>(i * i + j * j));
          direct(i + r, j + r) = lognormal_pdf(d, mu, sigma);
          max_neighbor = std::max(max_neighbor, direct(i + r, j + r));
        }
      direct(r, r) = max_neighbor;
      direct /= direct.sum();
      CHECK((k.weights - direct).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
  SUBCASE("radial symmetry: weight depends only on distance") {
    auto k = LognormalKernel2D::build(0.0, 0.75, 3);
    const int r = 3;
    for (int i = -r; i <= r; ++i)
      for (int j = -r; j <= r; ++j) {
        CHECK(k.weights(i + r, j + r) == k.weights(j + r, i + r));
        CHECK(k.weights(i + r, j + r) == k.weights(-i + r, j + r));
        CHECK(k.weights(i + r, j + r) == k.weights(i + r, -j + r));
      }
  }
  SUBCASE("small sigma concentrates mass on the d=1 ring") {
    auto k = LognormalKernel2D::build(0.0, 0.1, 3);
    const int r = 3;
    // four distance-1 neighbors plus the center (which copies their weight)
    double ring = k.weights(r + 1, r) + k.weights(r - 1, r) + k.weights(r, r + 1) +
                  k.weights(r, r - 1) + k.weights(r, r);
    CHECK(ring > 0.99);
  }
  SUBCASE("center=0 variant and parameter validation") {
    auto k = LognormalKernel2D::build(0.0, 0.75, 3, false);
    CHECK(k.weights(3, 3) == 0.0);
    CHECK(std::abs(k.weights.sum() - 1.0) < 1e-12);
    CHECK_THROWS_AS(LognormalKernel2D::build(0.0, 0.0, 3), TdgpError);
    CHECK_THROWS_AS(LognormalKernel2D::build(0.0, 0.75, 0), TdgpError);
  }
}

TEST_CASE("smooth") {
  auto kernel = LognormalKernel2D::build(0.0, 0.75, 3);
  SUBCASE("constant map is invariant") {
    ProbabilityMap map = full_mask_map(21, 0.8);
    ProbabilityMap out = smooth(map, kernel);
    for (double v : out.values.data) CHECK(std::abs(v - 0.8) < 1e-10);
  }
  SUBCASE("impulse response spreads mass, max bounded by the kernel max") {
    ProbabilityMap map = full_mask_map(21);
    map.values.at(10, 10, 0) = 1.0;
    ProbabilityMap out = smooth(map, kernel);
    double wmax = kernel.weights.maxCoeff();
    CHECK(out.values.at(10, 10, 0) <= wmax + 1e-15);
    CHECK(out.values.at(11, 10, 0) == doctest::Approx(wmax).epsilon(1e-12));
    // total mass preserved for interior-supported maps
    double mass = 0.0;
    for (double v : out.values.data) mass += v;
    CHECK(std::abs(mass - 1.0) < 1e-10);
  }
  SUBCASE("linearity") {
    Rng rng(5);
    ProbabilityMap m1 = full_mask_map(15);
    ProbabilityMap m2 = full_mask_map(15);
    for (std::size_t i = 0; i < m1.values.data.size(); ++i) {
      m1.values.data[i] = rng.uniform();
      m2.values.data[i] = rng.uniform();
    }
    double a = 0.3, b = 0.6;
    ProbabilityMap combo = full_mask_map(15);
    for (std::size_t i = 0; i < combo.values.data.size(); ++i)
      combo.values.data[i] = a * m1.values.data[i] + b * m2.values.data[i];
    ProbabilityMap s1 = smooth(m1, kernel);
    ProbabilityMap s2 = smooth(m2, kernel);
    ProbabilityMap sc = smooth(combo, kernel);
    for (std::size_t i = 0; i < sc.values.data.size(); ++i)
      CHECK(std::abs(sc.values.data[i] -
                     (a * s1.values.data[i] + b * s2.values.data[i])) < 1e-12);
  }
  SUBCASE("out-of-mask voxels are re-zeroed") {
    ProbabilityMap map = full_mask_map(21, 0.5);
    map.mask.at(0, 0, 0) = 0;
    ProbabilityMap out = smooth(map, kernel);
    CHECK(out.values.at(0, 0, 0) == 0.0);
  }
  SUBCASE("kernel must fit in the slice") {
    ProbabilityMap tiny = full_mask_map(5);
    CHECK_THROWS_AS(smooth(tiny, kernel), TdgpError);
  }
}

TEST_CASE("threshold") {
  ProbabilityMap map = full_mask_map(4);
  map.values.at(0, 0, 0) = 0.49;
  map.values.at(1, 0, 0) = 0.5;
  map.values.at(2, 0, 0) = 0.51;
  LabelVolume lab = threshold(map, 0.5);
  CHECK(lab.at(0, 0, 0) == 0);
  CHECK(lab.at(1, 0, 0) == 1);
  CHECK(lab.at(2, 0, 0) == 1);

  SUBCASE("all-zero map gives an empty lesion") {
    LabelVolume empty = threshold(full_mask_map(4), 0.5);
    for (auto v : empty.data) CHECK(v == 0);
  }
  SUBCASE("monotone in tau") {
    Rng rng(6);
    ProbabilityMap m = full_mask_map(8);
    for (auto& v : m.values.data) v = rng.uniform();
    LabelVolume lo = threshold(m, 0.3);
    LabelVolume hi = threshold(m, 0.7);
    for (std::size_t i = 0; i < lo.data.size(); ++i)
      if (hi.data[i]) CHECK(lo.data[i] == 1);
  }
  SUBCASE("tau outside (0,1) rejected") {
    CHECK_THROWS_AS(threshold(map, 0.0), TdgpError);
    CHECK_THROWS_AS(threshold(map, 1.0), TdgpError);
  }
}

TEST_CASE("smooth + threshold removes an isolated single-voxel positive") {
  auto kernel = LognormalKernel2D::build(0.0, 0.75, 3);
  for (double island : {1.0, 0.5}) {
    CAPTURE(island);
    ProbabilityMap map = full_mask_map(21);
    map.values.at(10, 10, 0) = island;
    LabelVolume lab = threshold(smooth(map, kernel), 0.5);
    int positives = 0;
    for (auto v : lab.data) positives += v;
    CHECK(positives == 0);
  }
}
