#include "tdgp/postprocess.hpp"

#include <cmath>

namespace tdgp {

namespace {

double lognormal_pdf(double d, double mu, double sigma) {
  if (d <= 0.0) return 0.0;
  double z = (std::log(d) - mu) / sigma;
  return std::exp(-0.5 * z * z) / (d * sigma * std::sqrt(2.0 * M_PI));
}

inline int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

LognormalKernel2D LognormalKernel2D::build(double mu, double sigma, int radius_vox,
                                           bool center_max) {
  if (!(sigma > 0.0)) throw data_error("lognormal kernel: sigma must be > 0");
  if (radius_vox < 1) throw data_error("lognormal kernel: radius must be >= 1");

  LognormalKernel2D k;
  k.mu = mu;
  k.sigma = sigma;
  k.radius_vox = radius_vox;
  const int n = 2 * radius_vox + 1;
  k.weights.resize(n, n);
  double max_neighbor = 0.0;
  for (int i = -radius_vox; i <= radius_vox; ++i)
    for (int j = -radius_vox; j <= radius_vox; ++j) {
      double d = std::sqrt(static_cast<double>(i) * i + static_cast<double>(j) * j);
      double w = lognormal_pdf(d, mu, sigma);
      k.weights(i + radius_vox, j + radius_vox) = w;
      max_neighbor = std::max(max_neighbor, w);
    }
  k.weights(radius_vox, radius_vox) = center_max ? max_neighbor : 0.0;
  k.weights /= k.weights.sum();
  return k;
}

ProbabilityMap smooth(const ProbabilityMap& map, const LognormalKernel2D& kernel) {
  const auto& v = map.values;
  if (map.mask.nx != v.nx || map.mask.ny != v.ny || map.mask.nz != v.nz)
    throw data_error("smooth: mask/volume shape mismatch");
  const int r = kernel.radius_vox;
  if (2 * r + 1 > v.nx || 2 * r + 1 > v.ny)
    throw data_error("smooth: kernel does not fit within the slice");

  ProbabilityMap out = map;
  for (int z = 0; z < v.nz; ++z)
    for (int x = 0; x < v.nx; ++x)
      for (int y = 0; y < v.ny; ++y) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          for (int j = -r; j <= r; ++j)
            acc += kernel.weights(i + r, j + r) *
                   v.at(reflect(x + i, v.nx), reflect(y + j, v.ny), z);
        out.values.at(x, y, z) = acc;
      }
  out.enforce_invariants();  // re-zero out-of-mask, clamp to [0,1]
  return out;
}

LabelVolume threshold(const ProbabilityMap& map, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw data_error("threshold: tau must be in (0,1)");
  LabelVolume out(map.values.nx, map.values.ny, map.values.nz, 0);
  out.spacing = map.values.spacing;
  for (std::size_t i = 0; i < map.values.data.size(); ++i)
    out.data[i] = (map.mask.data[i] && map.values.data[i] >= tau) ? 1 : 0;
  return out;
}

}  // namespace tdgp
