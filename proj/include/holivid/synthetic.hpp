#pragma once

#include <cstdint>
#include <string>

#include "holivid/manifest.hpp"
#include "holivid/taxonomy.hpp"
#include "holivid/tensor.hpp"

namespace holivid {

// Deterministic synthetic corpus.  Static labels are colored square templates
// at label-specific positions in the top half of the frame, present in every
// frame (decidable from any single frame).  Dynamic labels are a white dot
// orbiting a shared circle in the bottom half; the label determines only the
// signed angular velocity, and the phase is random per video, so any single
// frame is statistically identical across dynamic labels — only frame pairs
// reveal the label.
struct SyntheticSpec {
  int n_train = 64;
  int n_val = 16;
  int n_test = 16;
  int frames = 8;        // T; one of {8,16,32}
  int height = 32;       // H == W, multiple of 4, >= 16
  int width = 32;
  int static_labels = 4;   // ids [0, S)
  int dynamic_labels = 4;  // ids [S, S+D)
  int labels_min = 1;      // labels per video, inclusive range
  int labels_max = 3;
  double noise_std = 0.02;
  uint64_t seed = 7;
};

void validate_spec(const SyntheticSpec& spec);

// Static labels cycle {scene, object, attribute, concept}; dynamic labels
// cycle {action, event}.
Taxonomy make_synthetic_taxonomy(const SyntheticSpec& spec);

struct SyntheticCorpus {
  Taxonomy taxonomy;
  Manifest manifest;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// Renders (3, T, H, W) in [0,1] from the record's labels; deterministic in
// (spec.seed, video_id).
Tensor render_clip(const SyntheticSpec& spec, const AnnotationRecord& record);
// Convenience overload; throws if video_id is not in the manifest.
Tensor render_clip(const SyntheticSpec& spec, const Manifest& manifest, const std::string& video_id);

// JSON (de)serialization of the spec, for the synth output directory.
std::string spec_to_json(const SyntheticSpec& spec);
SyntheticSpec spec_from_json_text(const std::string& text);
SyntheticSpec load_spec(const std::string& path);
void save_spec(const std::string& path, const SyntheticSpec& spec);

}  // namespace holivid
