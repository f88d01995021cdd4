#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tdgp/volume.hpp"

namespace tdgp {

struct PreprocessConfig {
  double smooth_sigma_mm = 1.0;
  double mask_low = 0.0;     // keep time-mean strictly above this
  double mask_high = 300.0;  // and strictly below this
  bool downsample = false;   // optional 2x2 in-slice mean pooling
};

// Threshold the time-mean intensity to (low, high), keep the largest
// 6-connected 3D component, then fill internal holes slice by slice.
MaskVolume mask_brain(const CtpVolume4D& vol, double low, double high);

// In-slice 2D Gaussian smoothing of every (z, t) slice; sigma given in mm and
// converted through the voxel spacing, kernel truncated at 3 sigma, reflect
// padding. sigma_mm = 0 is the identity.
CtpVolume4D spatial_smooth(const CtpVolume4D& vol, double sigma_mm);

// Symmetric trim to t_target points; an odd surplus drops
// floor((t_p - T)/2) from the front and the rest from the back.
CtpVolume4D trim_time(const CtpVolume4D& vol, int t_target);

// Trim every patient to T = min_p t_p time points.
void temporal_equalize(std::vector<CtpVolume4D>& cohort);

// 2x2 in-slice mean pooling (intensities) / max pooling (labels); trailing
// odd rows or columns are dropped and in-slice spacing doubles.
CtpVolume4D downsample2x2(const CtpVolume4D& vol);
LabelVolume downsample2x2_labels(const LabelVolume& labels);

// (X_p - mean) / std over all entries of the patient matrix, population std.
Eigen::MatrixXd normalize(const Eigen::MatrixXd& xp);

struct VoxelKey {
  int patient = 0;
  int x = 0, y = 0, z = 0;
};

struct PatientRange {
  std::string id;
  int offset = 0;  // first row of this patient in the cohort matrix
  int count = 0;
  int nx = 0, ny = 0, nz = 0;
  Spacing spacing;
};

// The V x T temporal feature matrix with labels and the row -> voxel map.
struct VoxelMatrix {
  Eigen::MatrixXd x;
  std::vector<std::uint8_t> y;
  std::vector<VoxelKey> index_map;
  std::vector<PatientRange> patients;

  int v() const { return static_cast<int>(x.rows()); }
  int t() const { return static_cast<int>(x.cols()); }
};

// Rows of one patient in z, then y, then x order over the mask.
std::pair<Eigen::MatrixXd, std::vector<VoxelKey>> extract_patient_rows(
    const CtpVolume4D& vol, const MaskVolume& mask, int patient_index);

// Concatenate per-patient matrices into the cohort VoxelMatrix; labels are
// positive-means-lesion. Volumes must already share a uniform T.
VoxelMatrix flatten_and_assemble(const std::vector<CtpVolume4D>& vols,
                                 const std::vector<MaskVolume>& masks,
                                 const std::vector<LabelVolume>& labels,
                                 bool normalize_per_patient = true);

// Scatter per-row values back into one patient's raster (inverse of the
// flatten row order).
ProbabilityVolume scatter_to_volume(const VoxelMatrix& vm, int patient,
                                    const Eigen::VectorXd& values);
MaskVolume patient_mask_from_index(const VoxelMatrix& vm, int patient);

// The fixed pipeline: mask -> smooth -> equalize -> normalize -> flatten.
struct CohortPatient {
  CtpVolume4D volume;
  LabelVolume labels;
};
struct PreprocessOutput {
  VoxelMatrix matrix;
  std::vector<MaskVolume> masks;
};
PreprocessOutput preprocess_cohort(std::vector<CohortPatient> cohort,
                                   const PreprocessConfig& cfg);

}  // namespace tdgp
