#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tdgp/errors.hpp"

namespace tdgp {

struct Spacing {
  double dx = 1.0;
  double dy = 1.0;
  double dz = 1.0;
};

// 3D raster, row-major over (X, Y, Z): z varies fastest.
template <typename T>
struct Grid3 {
  int nx = 0, ny = 0, nz = 0;
  Spacing spacing;
  std::vector<T> data;

  Grid3() = default;
  Grid3(int x, int y, int z, T fill = T{})
      : nx(x), ny(y), nz(z), data(static_cast<std::size_t>(x) * y * z, fill) {}

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * ny + y) * nz + z;
  }
  T& at(int x, int y, int z) { return data[index(x, y, z)]; }
  const T& at(int x, int y, int z) const { return data[index(x, y, z)]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Grid3& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz;
  }
};

using MaskVolume = Grid3<std::uint8_t>;
using LabelVolume = Grid3<std::uint8_t>;
using ProbabilityVolume = Grid3<double>;

// 4D CTP series, row-major over (X, Y, Z, T): the time axis is contiguous.
struct CtpVolume4D {
  int nx = 0, ny = 0, nz = 0, nt = 0;
  Spacing spacing;
  std::string patient_id;
  std::vector<double> data;

  CtpVolume4D() = default;
  CtpVolume4D(int x, int y, int z, int t, Spacing s = {}, std::string id = {})
      : nx(x), ny(y), nz(z), nt(t), spacing(s), patient_id(std::move(id)),
        data(static_cast<std::size_t>(x) * y * z * t, 0.0) {}

  std::size_t index(int x, int y, int z, int t) const {
    return ((static_cast<std::size_t>(x) * ny + y) * nz + z) * static_cast<std::size_t>(nt) + t;
  }
  double& at(int x, int y, int z, int t) { return data[index(x, y, z, t)]; }
  const double& at(int x, int y, int z, int t) const { return data[index(x, y, z, t)]; }

  void validate() const {
    if (nx < 1 || ny < 1 || nz < 1 || nt < 1)
      throw data_error("volume '" + patient_id + "': dimensions must be positive");
    if (!(spacing.dx > 0.0 && spacing.dy > 0.0 && spacing.dz > 0.0))
      throw data_error("volume '" + patient_id + "': spacing must be positive");
    for (double v : data)
      if (!std::isfinite(v))
        throw data_error("volume '" + patient_id + "': non-finite intensity");
  }
};

// Probability raster with its companion brain mask; out-of-mask voxels are 0
// and in-mask values are clamped to [0,1].
struct ProbabilityMap {
  ProbabilityVolume values;
  MaskVolume mask;

  void enforce_invariants() {
    for (std::size_t i = 0; i < values.data.size(); ++i) {
      if (!mask.data[i])
        values.data[i] = 0.0;
      else
        values.data[i] = std::min(1.0, std::max(0.0, values.data[i]));
    }
  }
};

}  // namespace tdgp
