#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tdgp/volume.hpp"

namespace tdgp {

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  long total() const { return tp + fp + fn + tn; }
};

// Counts over in-mask voxels only.
ConfusionCounts confusion(const LabelVolume& pred, const LabelVolume& truth,
                          const MaskVolume& mask);

// Standard overlap scores. 0/0 resolves to 1 when both prediction and truth
// are empty (perfect agreement), else 0.
double dsc(const ConfusionCounts& c);
double jaccard(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);

double lesion_volume_ml(const LabelVolume& labels, const Spacing& spacing);

struct VolumePair {
  double true_ml = 0.0;
  double pred_ml = 0.0;
};

// R^2 of predicted volumes. Default: ordinary least squares of predicted on
// true (the scatter-plot convention, equal to squared correlation); with
// identity_line the residuals are taken against the y = x line instead.
double r_squared(const std::vector<VolumePair>& pairs, bool identity_line = false);

struct FoldScore {
  std::string patient_id;
  double dsc = 0.0, jaccard = 0.0, precision = 0.0, recall = 0.0;
  double true_ml = 0.0, pred_ml = 0.0;
  bool ok = true;
  std::string error;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation over folds
};

struct OnePatientOutResult {
  std::vector<FoldScore> folds;  // in patient order
  MetricSummary dsc, jaccard, precision, recall, true_ml, pred_ml;
  int failed_folds = 0;
};

// Train-on-all-but-one driver; the closure trains on the cohort minus the
// held-out patient and scores that patient. A fold that throws is recorded
// with its error and skipped in the aggregates.
OnePatientOutResult one_patient_out(int patient_count,
                                    const std::function<FoldScore(int)>& fold_fn);

}  // namespace tdgp
