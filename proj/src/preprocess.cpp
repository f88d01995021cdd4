#include "tdgp/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <string>

namespace tdgp {

MaskVolume mask_brain(const CtpVolume4D& vol, double low, double high) {
  vol.validate();
  const int nx = vol.nx, ny = vol.ny, nz = vol.nz, nt = vol.nt;

  MaskVolume keep(nx, ny, nz, 0);
  keep.spacing = vol.spacing;
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      for (int z = 0; z < nz; ++z) {
        double mean = 0.0;
        for (int t = 0; t < nt; ++t) mean += vol.at(x, y, z, t);
        mean /= nt;
        keep.at(x, y, z) = (mean > low && mean < high) ? 1 : 0;
      }

  // largest 6-connected component
  MaskVolume component(nx, ny, nz, 0);
  std::vector<int> label(keep.size(), -1);
  int best_label = -1;
  std::size_t best_size = 0;
  int next = 0;
  const int dx[] = {1, -1, 0, 0, 0, 0};
  const int dy[] = {0, 0, 1, -1, 0, 0};
  const int dz[] = {0, 0, 0, 0, 1, -1};
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      for (int z = 0; z < nz; ++z) {
        std::size_t start = keep.index(x, y, z);
        if (!keep.data[start] || label[start] >= 0) continue;
        std::size_t size = 0;
        std::queue<std::array<int, 3>> frontier;
        frontier.push({x, y, z});
        label[start] = next;
        while (!frontier.empty()) {
          auto [cx, cy, cz] = frontier.front();
          frontier.pop();
          ++size;
          for (int k = 0; k < 6; ++k) {
            int px = cx + dx[k], py = cy + dy[k], pz = cz + dz[k];
            if (px < 0 || px >= nx || py < 0 || py >= ny || pz < 0 || pz >= nz) continue;
            std::size_t pi = keep.index(px, py, pz);
            if (keep.data[pi] && label[pi] < 0) {
              label[pi] = next;
              frontier.push({px, py, pz});
            }
          }
        }
        if (size > best_size) {
          best_size = size;
          best_label = next;
        }
        ++next;
      }
  if (best_label < 0)
    throw data_error("mask_brain: empty mask for patient '" + vol.patient_id + "'");
  for (std::size_t i = 0; i < keep.size(); ++i)
    component.data[i] = (label[i] == best_label) ? 1 : 0;

  // slice-wise hole fill: background connected to the slice border stays out,
  // enclosed background joins the mask
  MaskVolume filled = component;
  std::vector<std::uint8_t> reach(static_cast<std::size_t>(nx) * ny);
  for (int z = 0; z < nz; ++z) {
    std::fill(reach.begin(), reach.end(), 0);
    std::queue<std::pair<int, int>> frontier;
    auto idx2 = [&](int x, int y) { return static_cast<std::size_t>(x) * ny + y; };
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y)
        if ((x == 0 || x == nx - 1 || y == 0 || y == ny - 1) &&
            !component.at(x, y, z) && !reach[idx2(x, y)]) {
          reach[idx2(x, y)] = 1;
          frontier.push({x, y});
        }
    while (!frontier.empty()) {
      auto [cx, cy] = frontier.front();
      frontier.pop();
      const int fx[] = {1, -1, 0, 0};
      const int fy[] = {0, 0, 1, -1};
      for (int k = 0; k < 4; ++k) {
        int px = cx + fx[k], py = cy + fy[k];
        if (px < 0 || px >= nx || py < 0 || py >= ny) continue;
        if (!component.at(px, py, z) && !reach[idx2(px, py)]) {
          reach[idx2(px, py)] = 1;
          frontier.push({px, py});
        }
      }
    }
    for (int x = 0; x < nx; ++x)
      for (int y = 0; y < ny; ++y)
        if (!component.at(x, y, z) && !reach[idx2(x, y)]) filled.at(x, y, z) = 1;
  }
  return filled;
}

namespace {

std::vector<double> gaussian_taps(double sigma_vox) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma_vox));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double w = std::exp(-0.5 * (i / sigma_vox) * (i / sigma_vox));
    taps[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : taps) w /= sum;
  return taps;
}

inline int reflect(int i, int n) {
  // reflect-without-repeat: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

CtpVolume4D spatial_smooth(const CtpVolume4D& vol, double sigma_mm) {
  if (sigma_mm < 0.0) throw data_error("spatial_smooth: sigma must be >= 0");
  if (sigma_mm == 0.0) return vol;
  vol.validate();

  const double sx = sigma_mm / vol.spacing.dx;
  const double sy = sigma_mm / vol.spacing.dy;
  const std::vector<double> wx = gaussian_taps(sx);
  const std::vector<double> wy = gaussian_taps(sy);
  const int rx = static_cast<int>(wx.size() / 2);
  const int ry = static_cast<int>(wy.size() / 2);

  CtpVolume4D out = vol;
  std::vector<double> slice(static_cast<std::size_t>(vol.nx) * vol.ny);
  std::vector<double> tmp(slice.size());
  auto at2 = [&](std::vector<double>& s, int x, int y) -> double& {
    return s[static_cast<std::size_t>(x) * vol.ny + y];
  };

  for (int z = 0; z < vol.nz; ++z) {
    for (int t = 0; t < vol.nt; ++t) {
      for (int x = 0; x < vol.nx; ++x)
        for (int y = 0; y < vol.ny; ++y) at2(slice, x, y) = vol.at(x, y, z, t);
      // separable passes, x then y
      for (int x = 0; x < vol.nx; ++x)
        for (int y = 0; y < vol.ny; ++y) {
          double acc = 0.0;
          for (int k = -rx; k <= rx; ++k)
            acc += wx[static_cast<std::size_t>(k + rx)] *
                   at2(slice, reflect(x + k, vol.nx), y);
          at2(tmp, x, y) = acc;
        }
      for (int x = 0; x < vol.nx; ++x)
        for (int y = 0; y < vol.ny; ++y) {
          double acc = 0.0;
          for (int k = -ry; k <= ry; ++k)
            acc += wy[static_cast<std::size_t>(k + ry)] *
                   at2(tmp, x, reflect(y + k, vol.ny));
          out.at(x, y, z, t) = acc;
        }
    }
  }
  return out;
}

CtpVolume4D trim_time(const CtpVolume4D& v, int t_target) {
  if (t_target < 1 || t_target > v.nt)
    throw data_error("trim_time: target " + std::to_string(t_target) +
                     " out of range for '" + v.patient_id + "' with " +
                     std::to_string(v.nt) + " time points");
  if (v.nt == t_target) return v;
  const int front = (v.nt - t_target) / 2;
  CtpVolume4D trimmed(v.nx, v.ny, v.nz, t_target, v.spacing, v.patient_id);
  for (int x = 0; x < v.nx; ++x)
    for (int y = 0; y < v.ny; ++y)
      for (int z = 0; z < v.nz; ++z)
        for (int t = 0; t < t_target; ++t)
          trimmed.at(x, y, z, t) = v.at(x, y, z, t + front);
  return trimmed;
}

void temporal_equalize(std::vector<CtpVolume4D>& cohort) {
  if (cohort.empty()) return;
  int t_min = cohort.front().nt;
  for (const auto& v : cohort) t_min = std::min(t_min, v.nt);
  for (auto& v : cohort)
    if (v.nt != t_min) v = trim_time(v, t_min);
}

CtpVolume4D downsample2x2(const CtpVolume4D& vol) {
  const int nx = vol.nx / 2, ny = vol.ny / 2;
  if (nx < 1 || ny < 1) throw data_error("downsample2x2: slice too small");
  Spacing s = vol.spacing;
  s.dx *= 2.0;
  s.dy *= 2.0;
  CtpVolume4D out(nx, ny, vol.nz, vol.nt, s, vol.patient_id);
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      for (int z = 0; z < vol.nz; ++z)
        for (int t = 0; t < vol.nt; ++t)
          out.at(x, y, z, t) = 0.25 * (vol.at(2 * x, 2 * y, z, t) +
                                       vol.at(2 * x + 1, 2 * y, z, t) +
                                       vol.at(2 * x, 2 * y + 1, z, t) +
                                       vol.at(2 * x + 1, 2 * y + 1, z, t));
  return out;
}

LabelVolume downsample2x2_labels(const LabelVolume& labels) {
  const int nx = labels.nx / 2, ny = labels.ny / 2;
  if (nx < 1 || ny < 1) throw data_error("downsample2x2: slice too small");
  LabelVolume out(nx, ny, labels.nz, 0);
  out.spacing = labels.spacing;
  out.spacing.dx *= 2.0;
  out.spacing.dy *= 2.0;
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      for (int z = 0; z < labels.nz; ++z)
        out.at(x, y, z) =
            std::max(std::max(labels.at(2 * x, 2 * y, z), labels.at(2 * x + 1, 2 * y, z)),
                     std::max(labels.at(2 * x, 2 * y + 1, z),
                              labels.at(2 * x + 1, 2 * y + 1, z)));
  return out;
}

Eigen::MatrixXd normalize(const Eigen::MatrixXd& xp) {
  if (xp.size() == 0) throw data_error("normalize: empty patient matrix");
  const double mean = xp.mean();
  const double var = (xp.array() - mean).square().sum() / static_cast<double>(xp.size());
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) throw data_error("normalize: zero-variance patient matrix");
  return ((xp.array() - mean) / sd).matrix();
}

std::pair<Eigen::MatrixXd, std::vector<VoxelKey>> extract_patient_rows(
    const CtpVolume4D& vol, const MaskVolume& mask, int patient_index) {
  if (mask.nx != vol.nx || mask.ny != vol.ny || mask.nz != vol.nz)
    throw data_error("extract: mask/volume shape mismatch for '" + vol.patient_id + "'");
  std::vector<VoxelKey> keys;
  for (int z = 0; z < vol.nz; ++z)
    for (int y = 0; y < vol.ny; ++y)
      for (int x = 0; x < vol.nx; ++x)
        if (mask.at(x, y, z)) keys.push_back({patient_index, x, y, z});

  Eigen::MatrixXd rows(static_cast<Eigen::Index>(keys.size()), vol.nt);
  for (std::size_t r = 0; r < keys.size(); ++r)
    for (int t = 0; t < vol.nt; ++t)
      rows(static_cast<Eigen::Index>(r), t) =
          vol.at(keys[r].x, keys[r].y, keys[r].z, t);
  return {std::move(rows), std::move(keys)};
}

VoxelMatrix flatten_and_assemble(const std::vector<CtpVolume4D>& vols,
                                 const std::vector<MaskVolume>& masks,
                                 const std::vector<LabelVolume>& labels,
                                 bool normalize_per_patient) {
  if (vols.empty()) throw data_error("flatten: empty cohort");
  if (vols.size() != masks.size() || vols.size() != labels.size())
    throw data_error("flatten: cohort, masks, and labels disagree in length");
  const int t = vols.front().nt;
  for (const auto& v : vols)
    if (v.nt != t) throw data_error("flatten: cohort is not temporally equalized");

  VoxelMatrix vm;
  std::vector<Eigen::MatrixXd> blocks;
  int total = 0;
  for (std::size_t p = 0; p < vols.size(); ++p) {
    const auto& vol = vols[p];
    const auto& lab = labels[p];
    if (lab.nx != vol.nx || lab.ny != vol.ny || lab.nz != vol.nz)
      throw data_error("flatten: label volume shape mismatch for '" + vol.patient_id + "'");
    auto [rows, keys] = extract_patient_rows(vol, masks[p], static_cast<int>(p));
    if (normalize_per_patient) rows = normalize(rows);

    PatientRange range;
    range.id = vol.patient_id;
    range.offset = total;
    range.count = static_cast<int>(keys.size());
    range.nx = vol.nx;
    range.ny = vol.ny;
    range.nz = vol.nz;
    range.spacing = vol.spacing;
    vm.patients.push_back(range);

    for (const auto& k : keys) {
      vm.index_map.push_back(k);
      vm.y.push_back(lab.at(k.x, k.y, k.z) > 0 ? 1 : 0);
    }
    total += range.count;
    blocks.push_back(std::move(rows));
  }

  vm.x.resize(total, t);
  for (std::size_t p = 0; p < blocks.size(); ++p)
    vm.x.middleRows(vm.patients[p].offset, vm.patients[p].count) = blocks[p];
  return vm;
}

ProbabilityVolume scatter_to_volume(const VoxelMatrix& vm, int patient,
                                    const Eigen::VectorXd& values) {
  const auto& range = vm.patients.at(static_cast<std::size_t>(patient));
  if (values.size() != range.count)
    throw data_error("scatter: expected " + std::to_string(range.count) + " values, got " +
                     std::to_string(values.size()));
  ProbabilityVolume out(range.nx, range.ny, range.nz, 0.0);
  out.spacing = range.spacing;
  for (int i = 0; i < range.count; ++i) {
    const auto& k = vm.index_map[static_cast<std::size_t>(range.offset + i)];
    out.at(k.x, k.y, k.z) = values(i);
  }
  return out;
}

MaskVolume patient_mask_from_index(const VoxelMatrix& vm, int patient) {
  const auto& range = vm.patients.at(static_cast<std::size_t>(patient));
  MaskVolume out(range.nx, range.ny, range.nz, 0);
  out.spacing = range.spacing;
  for (int i = 0; i < range.count; ++i) {
    const auto& k = vm.index_map[static_cast<std::size_t>(range.offset + i)];
    out.at(k.x, k.y, k.z) = 1;
  }
  return out;
}

PreprocessOutput preprocess_cohort(std::vector<CohortPatient> cohort,
                                   const PreprocessConfig& cfg) {
  if (cohort.empty()) throw data_error("preprocess: empty cohort");

  std::vector<CtpVolume4D> vols;
  std::vector<LabelVolume> labels;
  for (auto& p : cohort) {
    if (cfg.downsample) {
      p.volume = downsample2x2(p.volume);
      p.labels = downsample2x2_labels(p.labels);
    }
    vols.push_back(std::move(p.volume));
    labels.push_back(std::move(p.labels));
  }

  PreprocessOutput out;
  for (auto& v : vols) out.masks.push_back(mask_brain(v, cfg.mask_low, cfg.mask_high));
  for (auto& v : vols) v = spatial_smooth(v, cfg.smooth_sigma_mm);
  temporal_equalize(vols);
  out.matrix = flatten_and_assemble(vols, out.masks, labels, /*normalize=*/true);
  return out;
}

}  // namespace tdgp
