#pragma once

#include <string>
#include <vector>

#include "holivid/batching.hpp"
#include "holivid/checkpoint.hpp"
#include "holivid/model.hpp"
#include "holivid/synthetic.hpp"

namespace holivid {

struct FeatureMatrix {
  std::vector<std::string> video_ids;
  Tensor features;  // (N, D); rows follow the record order passed in
  std::vector<std::string> warnings;
};

// Post-pool, pre-head activations from the checkpointed trunk.  The heads are
// never touched, so a taxonomy fingerprint mismatch only degrades to a
// warning; a trunk parameter that is missing or mis-shaped is a hard error.
FeatureMatrix extract_features(const Checkpoint& ckpt, const SyntheticSpec& spec,
                               const Taxonomy& tax,
                               const std::vector<const AnnotationRecord*>& records,
                               int batch_size);

}  // namespace holivid
