#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdgp/dgp.hpp"
#include "tdgp/preprocess.hpp"
#include "tdgp/volume.hpp"

namespace tdgp {

// Raster container: magic "TDGP", version u16, kind u8, four u32 dims
// (X,Y,Z,T with T=1 for 3D kinds), three f64 spacings (mm), then the payload
// row-major over (X,Y,Z,T) in little-endian IEEE-754: f32 for 4D series, u8
// for labels/masks, f64 for probabilities.
enum class RasterKind : std::uint8_t {
  series4d = 0,
  labels = 1,
  mask = 2,
  probabilities = 3,
};

constexpr std::uint16_t kRasterVersion = 1;

void write_series(const std::string& path, const CtpVolume4D& vol);
CtpVolume4D read_series(const std::string& path);

void write_labels(const std::string& path, const LabelVolume& labels);
LabelVolume read_labels(const std::string& path);

void write_mask(const std::string& path, const MaskVolume& mask);
MaskVolume read_mask(const std::string& path);

void write_probabilities(const std::string& path, const ProbabilityVolume& prob);
ProbabilityVolume read_probabilities(const std::string& path);

RasterKind peek_raster_kind(const std::string& path);

// Checkpoint: magic "TDGPCKPT", version u16, architecture descriptor
// (H, input dim, layer widths, M, ard flag, per-layer mean-fn bytes,
// per-layer jitters), config echo (u32 length + UTF-8 bytes), RNG seed,
// iteration count, then every parameter as f64 little-endian in the model's
// flat layout (per layer: Z, m, raw Cholesky factors, log-lengthscales,
// log signal variance; column-major within each array).
constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const DgpModel& model,
                      const std::string& config_echo, std::uint64_t seed,
                      std::uint64_t iterations);

struct LoadedCheckpoint {
  DgpModel model;
  std::string config_echo;
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;
};
LoadedCheckpoint read_checkpoint(const std::string& path);

// VoxelMatrix archive: magic "TDGPVMAT", version u16, u32 V, u32 T, u32 P,
// per patient {u32 id length, id bytes, u32 offset, u32 count, u32 nx/ny/nz,
// f64 dx/dy/dz}, payload f64 V*T (row by row), labels u8 V, then u32 x/y/z
// per row.
constexpr std::uint16_t kMatrixVersion = 1;

void write_matrix(const std::string& path, const VoxelMatrix& vm);
VoxelMatrix read_matrix(const std::string& path);

// Human-readable row -> voxel sidecar.
void write_index_sidecar(const std::string& path, const VoxelMatrix& vm);

// Fixed-format float rendering shared by every CSV/report writer so that
// repeated runs stay byte-identical.
std::string format_double(double v);

struct TraceCsv {
  static void write(const std::string& path, const std::vector<TracePoint>& trace);
};

}  // namespace tdgp
