#include "tdgp/metrics.hpp"

#include <cmath>

namespace tdgp {

ConfusionCounts confusion(const LabelVolume& pred, const LabelVolume& truth,
                          const MaskVolume& mask) {
  if (!pred.same_shape(truth) || !pred.same_shape(mask))
    throw data_error("confusion: volume shapes disagree");
  ConfusionCounts c;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (!mask.data[i]) continue;
    bool p = pred.data[i] != 0;
    bool t = truth.data[i] != 0;
    if (p && t) ++c.tp;
    else if (p && !t) ++c.fp;
    else if (!p && t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {

double ratio(long num, long den, long pred_positive, long truth_positive) {
  if (den != 0) return static_cast<double>(num) / static_cast<double>(den);
  return (pred_positive == 0 && truth_positive == 0) ? 1.0 : 0.0;
}

}  // namespace

double dsc(const ConfusionCounts& c) {
  return ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, c.tp + c.fp, c.tp + c.fn);
}

double jaccard(const ConfusionCounts& c) {
  return ratio(c.tp, c.tp + c.fp + c.fn, c.tp + c.fp, c.tp + c.fn);
}

double precision(const ConfusionCounts& c) {
  return ratio(c.tp, c.tp + c.fp, c.tp + c.fp, c.tp + c.fn);
}

double recall(const ConfusionCounts& c) {
  return ratio(c.tp, c.tp + c.fn, c.tp + c.fp, c.tp + c.fn);
}

double lesion_volume_ml(const LabelVolume& labels, const Spacing& spacing) {
  long count = 0;
  for (auto v : labels.data) count += v != 0;
  return static_cast<double>(count) * spacing.dx * spacing.dy * spacing.dz / 1000.0;
}

double r_squared(const std::vector<VolumePair>& pairs, bool identity_line) {
  if (pairs.size() < 2) throw data_error("r_squared: need at least two pairs");
  double t_mean = 0.0, p_mean = 0.0;
  for (const auto& pr : pairs) {
    t_mean += pr.true_ml;
    p_mean += pr.pred_ml;
  }
  t_mean /= static_cast<double>(pairs.size());
  p_mean /= static_cast<double>(pairs.size());

  double stt = 0.0, spp = 0.0, stp = 0.0;
  for (const auto& pr : pairs) {
    stt += (pr.true_ml - t_mean) * (pr.true_ml - t_mean);
    spp += (pr.pred_ml - p_mean) * (pr.pred_ml - p_mean);
    stp += (pr.true_ml - t_mean) * (pr.pred_ml - p_mean);
  }
  if (!(stt > 0.0)) throw data_error("r_squared: true volumes are all equal");

  if (identity_line) {
    double ss_res = 0.0;
    for (const auto& pr : pairs)
      ss_res += (pr.pred_ml - pr.true_ml) * (pr.pred_ml - pr.true_ml);
    return 1.0 - ss_res / stt;
  }
  // OLS of predicted on true: R^2 = 1 - SS_res / SS_tot = corr^2
  if (!(spp > 0.0)) return 0.0;  // constant prediction
  return (stp * stp) / (stt * spp);
}

OnePatientOutResult one_patient_out(int patient_count,
                                    const std::function<FoldScore(int)>& fold_fn) {
  if (patient_count < 2)
    throw data_error("one_patient_out: need at least two patients");

  OnePatientOutResult result;
  for (int p = 0; p < patient_count; ++p) {
    FoldScore score;
    try {
      score = fold_fn(p);
      score.ok = true;
    } catch (const std::exception& e) {
      score.patient_id = "patient" + std::to_string(p);
      score.ok = false;
      score.error = e.what();
      ++result.failed_folds;
    }
    result.folds.push_back(std::move(score));
  }

  auto summarize = [&](auto member) {
    MetricSummary s;
    int n = 0;
    for (const auto& f : result.folds)
      if (f.ok) {
        s.mean += f.*member;
        ++n;
      }
    if (n == 0) return s;
    s.mean /= n;
    if (n >= 2) {
      double acc = 0.0;
      for (const auto& f : result.folds)
        if (f.ok) acc += (f.*member - s.mean) * (f.*member - s.mean);
      s.stddev = std::sqrt(acc / (n - 1));
    }
    return s;
  };
  result.dsc = summarize(&FoldScore::dsc);
  result.jaccard = summarize(&FoldScore::jaccard);
  result.precision = summarize(&FoldScore::precision);
  result.recall = summarize(&FoldScore::recall);
  result.true_ml = summarize(&FoldScore::true_ml);
  result.pred_ml = summarize(&FoldScore::pred_ml);
  return result;
}

}  // namespace tdgp
