#include "tdgp/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace tdgp {

double gamma_variate(const GammaVariateParams& p, double t) {
  if (t <= p.onset) return p.baseline;
  const double u = t - p.onset;
  return p.baseline + p.amplitude * std::pow(u, p.shape) * std::exp(-u / p.scale);
}

GammaVariateParams lesion_curve_params(const GammaVariateParams& healthy, double rho,
                                       double delta, double gamma) {
  GammaVariateParams lesion = healthy;
  lesion.amplitude = rho * healthy.amplitude * std::pow(gamma, -healthy.shape);
  lesion.onset = healthy.onset + delta;
  lesion.scale = gamma * healthy.scale;
  return lesion;
}

namespace {

struct Ellipsoid {
  double cx, cy, cz;
  double ax, ay, az;

  double r2(int x, int y, int z) const {
    double u = (x - cx) / ax, v = (y - cy) / ay, w = (z - cz) / az;
    return u * u + v * v + w * w;
  }
};

void validate(const SynthConfig& cfg) {
  if (cfg.patients < 1) throw data_error("synth: need at least one patient");
  if (cfg.nx < 8 || cfg.ny < 8 || cfg.nz < 1)
    throw data_error("synth: grid too small for the kernel supports");
  if (cfg.t_min < 2 || cfg.t_max < cfg.t_min)
    throw data_error("synth: invalid time-point range");
  if (!(cfg.lesion_fraction > 0.0 && cfg.lesion_fraction < 0.5))
    throw data_error("synth: lesion fraction must be in (0, 0.5)");
  if (!(cfg.curve.amplitude > 0 && cfg.curve.shape > 0 && cfg.curve.scale > 0 &&
        cfg.curve.noise_std >= 0))
    throw data_error("synth: invalid curve parameters");
}

GammaVariateParams jittered(const GammaVariateParams& base, double bound, Rng& rng) {
  auto j = [&]() { return rng.uniform(1.0 - bound, 1.0 + bound); };
  GammaVariateParams p = base;
  p.amplitude *= j();
  p.onset *= j();
  p.scale *= j();
  p.baseline *= j();
  return p;
}

}  // namespace

SynthPatient gen_patient(const SynthConfig& cfg, int patient_index) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, "patient", static_cast<std::uint64_t>(patient_index)));
  const int range = cfg.t_max - cfg.t_min + 1;
  const int nt = cfg.t_min + patient_index % range;

  SynthPatient out;
  out.volume = CtpVolume4D(cfg.nx, cfg.ny, cfg.nz, nt, cfg.spacing,
                           "patient" + std::to_string(patient_index));
  out.labels = LabelVolume(cfg.nx, cfg.ny, cfg.nz, 0);
  out.labels.spacing = cfg.spacing;
  out.brain = MaskVolume(cfg.nx, cfg.ny, cfg.nz, 0);
  out.brain.spacing = cfg.spacing;

  Ellipsoid brain{(cfg.nx - 1) * 0.5, (cfg.ny - 1) * 0.5, (cfg.nz - 1) * 0.5,
                  0.42 * cfg.nx, 0.42 * cfg.ny, std::max(1.0, 0.75 * cfg.nz)};
  Ellipsoid skull_outer = brain;
  skull_outer.ax *= 1.12;
  skull_outer.ay *= 1.12;
  skull_outer.az *= 1.12;

  std::vector<std::array<int, 3>> brain_voxels;
  for (int x = 0; x < cfg.nx; ++x)
    for (int y = 0; y < cfg.ny; ++y)
      for (int z = 0; z < cfg.nz; ++z)
        if (brain.r2(x, y, z) <= 1.0) {
          out.brain.at(x, y, z) = 1;
          brain_voxels.push_back({x, y, z});
        }
  if (brain_voxels.empty()) throw data_error("synth: degenerate brain ellipsoid");

  // lesion sizing: start from the analytic in-slice radius for the target
  // count, then rescale against the voxelized count
  const double target = cfg.lesion_fraction * static_cast<double>(brain_voxels.size());
  const double aspect = rng.uniform(0.8, 1.25);
  double r = std::sqrt(target / (M_PI * std::max(1, cfg.nz)));
  Ellipsoid lesion{0, 0, brain.cz, 0, 0, brain.az};

  auto lesion_voxels_at = [&](double cx, double cy, double rad) {
    lesion.cx = cx;
    lesion.cy = cy;
    lesion.ax = rad * aspect;
    lesion.ay = rad / aspect;
    std::vector<std::array<int, 3>> vox;
    for (int x = 0; x < cfg.nx; ++x)
      for (int y = 0; y < cfg.ny; ++y)
        for (int z = 0; z < cfg.nz; ++z)
          if (lesion.r2(x, y, z) <= 1.0) vox.push_back({x, y, z});
    return vox;
  };
  for (int iter = 0; iter < 5; ++iter) {
    auto vox = lesion_voxels_at(brain.cx, brain.cy, r);
    if (vox.empty()) {
      r *= 1.5;
      continue;
    }
    double ratio = target / static_cast<double>(vox.size());
    if (std::abs(ratio - 1.0) < 0.1) break;
    r *= std::sqrt(ratio);
  }

  std::vector<std::array<int, 3>> lesion_voxels;
  bool placed = false;
  for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
    const auto& center =
        brain_voxels[static_cast<std::size_t>(rng.uniform_index(brain_voxels.size()))];
    auto vox = lesion_voxels_at(center[0], center[1], r);
    bool fits = !vox.empty();
    for (const auto& v : vox)
      if (!out.brain.at(v[0], v[1], v[2])) {
        fits = false;
        break;
      }
    if (fits) {
      lesion_voxels = std::move(vox);
      placed = true;
    }
  }
  if (!placed)
    throw data_error("synth: could not place the lesion inside the brain for '" +
                     out.volume.patient_id + "'");
  for (const auto& v : lesion_voxels) out.labels.at(v[0], v[1], v[2]) = 1;

  const GammaVariateParams lesion_base =
      lesion_curve_params(cfg.curve, cfg.lesion_rho, cfg.lesion_delay, cfg.lesion_gamma);
  for (int x = 0; x < cfg.nx; ++x)
    for (int y = 0; y < cfg.ny; ++y)
      for (int z = 0; z < cfg.nz; ++z) {
        const bool in_brain = out.brain.at(x, y, z) != 0;
        const bool in_skull = !in_brain && skull_outer.r2(x, y, z) <= 1.0 &&
                              brain.r2(x, y, z) > 1.0;
        if (!in_brain && !in_skull) continue;  // air stays exactly 0
        if (in_skull) {
          for (int t = 0; t < nt; ++t)
            out.volume.at(x, y, z, t) =
                cfg.skull_intensity + cfg.curve.noise_std * rng.normal();
          continue;
        }
        const bool lesion_voxel = out.labels.at(x, y, z) != 0;
        GammaVariateParams p =
            jittered(lesion_voxel ? lesion_base : cfg.curve, cfg.param_jitter, rng);
        for (int t = 0; t < nt; ++t)
          out.volume.at(x, y, z, t) =
              gamma_variate(p, static_cast<double>(t)) + cfg.curve.noise_std * rng.normal();
      }
  return out;
}

std::vector<SynthPatient> gen_cohort(const SynthConfig& cfg) {
  validate(cfg);
  std::vector<SynthPatient> cohort;
  cohort.reserve(static_cast<std::size_t>(cfg.patients));
  for (int p = 0; p < cfg.patients; ++p) cohort.push_back(gen_patient(cfg, p));
  return cohort;
}

}  // namespace tdgp
