#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "holivid/manifest.hpp"
#include "holivid/synthetic.hpp"
#include "holivid/taxonomy.hpp"
#include "holivid/tensor.hpp"

namespace holivid {

// One training/eval batch: rendered clips plus {0,1} targets and mask.
struct Batch {
  Tensor clips;    // (B, 3, T, H, W)
  Tensor targets;  // (B, L)
  Tensor mask;     // (B, L); all ones for synthetic data (fully observed)
  std::vector<std::string> video_ids;
};

// Renders clips on demand and memoizes them; the synthetic corpora used here
// are small enough to keep resident.
class ClipCache {
public:
  const Tensor& get(const SyntheticSpec& spec, const AnnotationRecord& rec);
  void clear() { cache_.clear(); }

private:
  std::map<std::string, Tensor> cache_;
};

// Deterministic batch order over `records`: identity order, or a seeded
// permutation when shuffle_seed is set.  Every record appears exactly once;
// the final partial batch is kept.
std::vector<std::vector<int>> plan_batches(int n_records, int batch_size,
                                           std::optional<uint64_t> shuffle_seed);

Batch assemble_batch(const SyntheticSpec& spec, const Taxonomy& tax,
                     const std::vector<const AnnotationRecord*>& records,
                     const std::vector<int>& indices, ClipCache* cache);

// Multi-hot target row for one record.
void fill_target_row(const AnnotationRecord& rec, int label_count, double* row);

}  // namespace holivid
