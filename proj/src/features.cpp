#include "holivid/features.hpp"

#include <cstring>

#include "holivid/error.hpp"
#include "holivid/rng.hpp"

namespace holivid {

FeatureMatrix extract_features(const Checkpoint& ckpt, const SyntheticSpec& spec,
                               const Taxonomy& tax,
                               const std::vector<const AnnotationRecord*>& records,
                               int batch_size) {
  if (batch_size < 1) throw ValidationError("extract_features: batch_size must be >= 1");
  FeatureMatrix out;
  if (!ckpt.taxonomy_sha256.empty() && ckpt.taxonomy_sha256 != tax.fingerprint()) {
    out.warnings.push_back("taxonomy fingerprint differs from the checkpoint (" +
                           ckpt.taxonomy_sha256 + " vs " + tax.fingerprint() +
                           "); features are head-independent, continuing");
  }

  VideoNet net(ckpt.config, tax);
  net.init_params(derive_seed(0, "features-heads"));
  for (Param* p : net.params()) {
    if (p->name.rfind("head.", 0) == 0) continue;  // heads are unused below
    const Tensor* src = ckpt.find(p->name);
    if (src == nullptr)
      throw ValidationError("checkpoint: missing trunk parameter '" + p->name + "'");
    if (!src->same_shape(p->value))
      throw ValidationError("checkpoint: trunk shape mismatch for parameter '" + p->name + "'");
    p->value = *src;
  }

  const int64_t d = net.plan().feature_dim;
  out.features = Tensor({static_cast<int64_t>(records.size()), d});
  out.video_ids.reserve(records.size());
  for (const AnnotationRecord* r : records) out.video_ids.push_back(r->video_id);

  ClipCache cache;
  for (const auto& idx : plan_batches(static_cast<int>(records.size()), batch_size, std::nullopt)) {
    Batch batch = assemble_batch(spec, tax, records, idx, &cache);
    Tensor feats = net.forward_features(batch.clips);
    for (size_t k = 0; k < idx.size(); ++k) {
      std::memcpy(out.features.data() + static_cast<int64_t>(idx[k]) * d,
                  feats.data() + static_cast<int64_t>(k) * d, static_cast<size_t>(d) * sizeof(double));
    }
  }
  return out;
}

}  // namespace holivid
