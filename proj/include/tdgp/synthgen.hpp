#pragma once

#include <cstdint>
#include <vector>

#include "tdgp/rng.hpp"
#include "tdgp/volume.hpp"

namespace tdgp {

// Gamma-variate bolus curve: b + A (t - t0)^alpha exp(-(t - t0)/beta) for
// t > t0, else b. The noise-free peak sits at t0 + alpha * beta.
struct GammaVariateParams {
  double amplitude = 100.0;  // A
  double onset = 4.0;        // t0, in time steps
  double shape = 3.0;        // alpha
  double scale = 1.5;        // beta
  double baseline = 40.0;    // b
  double noise_std = 2.0;
};

double gamma_variate(const GammaVariateParams& p, double t);

// Lesion voxels follow a delayed, attenuated, broadened curve. rho scales the
// peak above baseline, delta delays the onset, gamma broadens the passage
// (the amplitude is rescaled by gamma^-alpha so the peak ratio stays rho).
GammaVariateParams lesion_curve_params(const GammaVariateParams& healthy, double rho,
                                       double delta, double gamma);

struct SynthConfig {
  int patients = 8;               // P
  int nx = 32, ny = 32, nz = 2;
  int t_min = 20, t_max = 24;     // t_p cycles across this range
  double lesion_fraction = 0.10;  // of brain voxels, in (0, 0.5)
  double lesion_rho = 0.55;
  double lesion_delay = 3.0;
  double lesion_gamma = 1.6;
  GammaVariateParams curve;
  Spacing spacing{1.0, 1.0, 5.0};
  double skull_intensity = 1000.0;
  double param_jitter = 0.05;     // per-voxel multiplicative jitter bound
  std::uint64_t seed = 0;
};

struct SynthPatient {
  CtpVolume4D volume;
  LabelVolume labels;
  MaskVolume brain;  // the generator's own ground-truth brain mask
};

// Ellipsoidal brain with a high-intensity skull shell and zero background;
// an ellipsoidal lesion placed uniformly at random inside the brain
// (repositioned up to 100 times if it pokes outside, then an error).
SynthPatient gen_patient(const SynthConfig& cfg, int patient_index);

std::vector<SynthPatient> gen_cohort(const SynthConfig& cfg);

}  // namespace tdgp
