#pragma once

#include <Eigen/Core>

#include "tdgp/volume.hpp"

namespace tdgp {

// Radially symmetric in-slice smoothing kernel whose profile follows the
// log-normal density in the distance from the center. The log-normal pdf is 0
// at d = 0, so the center cell takes the maximum tabulated neighbor weight
// (or 0 with center_max = false); the table is normalized to sum 1.
struct LognormalKernel2D {
  double mu = 0.0;
  double sigma = 0.75;
  int radius_vox = 3;
  Eigen::MatrixXd weights;  // (2r+1) x (2r+1)

  static LognormalKernel2D build(double mu, double sigma, int radius_vox,
                                 bool center_max = true);
};

// Per-slice 2D convolution with reflect padding; out-of-mask voxels are
// re-zeroed afterward.
ProbabilityMap smooth(const ProbabilityMap& map, const LognormalKernel2D& kernel);

// label = 1 where value >= tau.
LabelVolume threshold(const ProbabilityMap& map, double tau);

}  // namespace tdgp
