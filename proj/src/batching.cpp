#include "tdgp/batching.hpp"

#include <algorithm>

#include "tdgp/errors.hpp"
#include "tdgp/rng.hpp"

namespace tdgp {

ClassIndex make_class_index(const std::vector<std::uint8_t>& y) {
  ClassIndex idx;
  std::vector<int> ones, zeros;
  for (int i = 0; i < static_cast<int>(y.size()); ++i)
    (y[static_cast<std::size_t>(i)] ? ones : zeros).push_back(i);
  if (ones.empty() || zeros.empty())
    throw data_error("batching: both classes must be present, got a single-class label vector");
  if (ones.size() <= zeros.size()) {
    idx.small = std::move(ones);
    idx.large = std::move(zeros);
  } else {
    idx.small = std::move(zeros);
    idx.large = std::move(ones);
  }
  return idx;
}

BatchPlan make_epoch_batches(const ClassIndex& idx, std::uint64_t seed) {
  const int vs = idx.v_small();
  const int vl = idx.v_large();
  const int b = idx.batch_count();

  std::vector<int> shuffled = idx.large;
  Rng rng(seed);
  rng.shuffle(shuffled);

  BatchPlan plan;
  plan.batches.reserve(static_cast<std::size_t>(b));
  std::vector<char> in_batch(static_cast<std::size_t>(idx.v_total()), 0);

  for (int k = 0; k < b; ++k) {
    std::vector<int> batch = idx.small;
    batch.reserve(static_cast<std::size_t>(2 * vs));

    const int lo = k * vs;
    const int hi = std::min((k + 1) * vs, vl);
    for (int i = lo; i < hi; ++i) {
      batch.push_back(shuffled[static_cast<std::size_t>(i)]);
      in_batch[static_cast<std::size_t>(shuffled[static_cast<std::size_t>(i)])] = 1;
    }
    // top up a short chunk from the already-consumed part of the shuffle
    int need = vs - std::max(0, hi - lo);
    const int consumed = lo;
    while (need > 0) {
      int cand = shuffled[static_cast<std::size_t>(rng.uniform_index(
          static_cast<std::uint64_t>(consumed)))];
      if (in_batch[static_cast<std::size_t>(cand)]) continue;
      batch.push_back(cand);
      in_batch[static_cast<std::size_t>(cand)] = 1;
      --need;
    }
    for (std::size_t i = static_cast<std::size_t>(vs); i < batch.size(); ++i)
      in_batch[static_cast<std::size_t>(batch[i])] = 0;
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

BatchPlan make_plain_epoch_batches(int v_total, int batch_size, std::uint64_t seed) {
  if (batch_size < 1 || v_total < batch_size)
    throw data_error("batching: batch size must be in [1, V]");
  std::vector<int> order(static_cast<std::size_t>(v_total));
  for (int i = 0; i < v_total; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);

  BatchPlan plan;
  const int b = v_total / batch_size;
  plan.batches.reserve(static_cast<std::size_t>(b));
  for (int k = 0; k < b; ++k)
    plan.batches.emplace_back(order.begin() + k * batch_size,
                              order.begin() + (k + 1) * batch_size);
  return plan;
}

}  // namespace tdgp
