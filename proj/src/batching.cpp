#include "holivid/batching.hpp"

#include <cstring>
#include <numeric>

#include "holivid/error.hpp"
#include "holivid/rng.hpp"

namespace holivid {

const Tensor& ClipCache::get(const SyntheticSpec& spec, const AnnotationRecord& rec) {
  auto it = cache_.find(rec.video_id);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(rec.video_id, render_clip(spec, rec)).first->second;
}

std::vector<std::vector<int>> plan_batches(int n_records, int batch_size,
                                           std::optional<uint64_t> shuffle_seed) {
  if (batch_size < 1) throw ValidationError("batch_iter: batch_size must be >= 1");
  std::vector<int> order(static_cast<size_t>(n_records));
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }
  std::vector<std::vector<int>> plan;
  for (int i = 0; i < n_records; i += batch_size) {
    int end = std::min(i + batch_size, n_records);
    plan.emplace_back(order.begin() + i, order.begin() + end);
  }
  return plan;
}

void fill_target_row(const AnnotationRecord& rec, int label_count, double* row) {
  std::memset(row, 0, sizeof(double) * static_cast<size_t>(label_count));
  for (int id : rec.labels) {
    if (id >= label_count) throw ValidationError("targets: label id out of range for video " + rec.video_id);
    row[id] = 1.0;
  }
}

Batch assemble_batch(const SyntheticSpec& spec, const Taxonomy& tax,
                     const std::vector<const AnnotationRecord*>& records,
                     const std::vector<int>& indices, ClipCache* cache) {
  const int B = static_cast<int>(indices.size());
  const int L = tax.size();
  Batch batch;
  batch.clips = Tensor({B, 3, spec.frames, spec.height, spec.width});
  batch.targets = Tensor({B, L});
  batch.mask = Tensor::full({B, L}, 1.0);
  const int64_t clip_elems = static_cast<int64_t>(3) * spec.frames * spec.height * spec.width;
  for (int b = 0; b < B; ++b) {
    const AnnotationRecord& rec = *records[static_cast<size_t>(indices[static_cast<size_t>(b)])];
    if (cache) {
      const Tensor& clip = cache->get(spec, rec);
      std::memcpy(batch.clips.data() + b * clip_elems, clip.data(),
                  sizeof(double) * static_cast<size_t>(clip_elems));
    } else {
      Tensor clip = render_clip(spec, rec);
      std::memcpy(batch.clips.data() + b * clip_elems, clip.data(),
                  sizeof(double) * static_cast<size_t>(clip_elems));
    }
    fill_target_row(rec, L, batch.targets.data() + static_cast<int64_t>(b) * L);
    batch.video_ids.push_back(rec.video_id);
  }
  return batch;
}

}  // namespace holivid
