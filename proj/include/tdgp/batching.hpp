#pragma once

#include <cstdint>
#include <vector>

namespace tdgp {

// Voxel indices split by class. The minority class is always `small`,
// whichever label value it carries; on a tie, label 1 is the small class.
struct ClassIndex {
  std::vector<int> small;
  std::vector<int> large;

  int v_small() const { return static_cast<int>(small.size()); }
  int v_large() const { return static_cast<int>(large.size()); }
  int v_total() const { return v_small() + v_large(); }
  int batch_size() const { return 2 * v_small(); }              // V_B = 2 V_S
  int batch_count() const { return v_total() / v_small(); }     // B = floor(V / V_S)
};

ClassIndex make_class_index(const std::vector<std::uint8_t>& y);

// One epoch's batches; every batch holds the entire small class plus V_S
// large-class indices.
struct BatchPlan {
  std::vector<std::vector<int>> batches;
};

// The large class is shuffled once per epoch and cut into B consecutive
// chunks of V_S; a short final chunk is topped up by uniform draws from the
// already-consumed large indices, without duplicates inside that batch.
BatchPlan make_epoch_batches(const ClassIndex& idx, std::uint64_t seed);

// Plain shuffled fixed-size batches (no class balancing); the TDGP ablation.
// The trailing remainder chunk smaller than batch_size is dropped.
BatchPlan make_plain_epoch_batches(int v_total, int batch_size, std::uint64_t seed);

}  // namespace tdgp
