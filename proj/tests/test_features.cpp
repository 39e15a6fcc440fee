#include <doctest.h>

#include <cstring>

#include "holivid/error.hpp"
#include "holivid/features.hpp"
#include "holivid/train.hpp"
#include "test_util.hpp"

using namespace holivid;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.n_train = 8;
  spec.n_val = 4;
  spec.n_test = 6;
  spec.frames = 8;
  spec.height = 32;
  spec.width = 32;
  spec.static_labels = 3;
  spec.dynamic_labels = 2;
  spec.labels_max = 2;
  spec.noise_std = 0.01;
  spec.seed = 9;
  return spec;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.mode = Mode::HatNet;
  cfg.frames = 8;
  cfg.input_size = 32;
  cfg.stage_channels = {4, 4, 4, 8};
  return cfg;
}

std::vector<const AnnotationRecord*> split_of(const Manifest& m, Split s) {
  std::vector<const AnnotationRecord*> out;
  for (const auto& r : m.records)
    if (r.split == s) out.push_back(&r);
  return out;
}

Checkpoint trained_checkpoint(const SyntheticCorpus& corpus, const SyntheticSpec& spec) {
  TrainConfig t;
  t.epochs = 0;
  t.seed = 2;
  return train(tiny_model(), t, spec, corpus.taxonomy, corpus.manifest).checkpoint;
}

}  // namespace

TEST_SUITE_BEGIN("features");

TEST_CASE("feature matrix has pooled width and follows record order") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  Checkpoint ckpt = trained_checkpoint(corpus, spec);
  auto recs = split_of(corpus.manifest, Split::Test);
  REQUIRE(recs.size() == 6);

  FeatureMatrix fm = extract_features(ckpt, spec, corpus.taxonomy, recs, 4);
  CHECK(fm.features.shape() == std::vector<int64_t>{6, 8});  // last stage width
  CHECK(fm.warnings.empty());
  REQUIRE(fm.video_ids.size() == 6);
  for (size_t i = 0; i < recs.size(); ++i) CHECK(fm.video_ids[i] == recs[i]->video_id);
}

TEST_CASE("extraction is deterministic and batch-size independent") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  Checkpoint ckpt = trained_checkpoint(corpus, spec);
  auto recs = split_of(corpus.manifest, Split::Test);

  FeatureMatrix a = extract_features(ckpt, spec, corpus.taxonomy, recs, 4);
  FeatureMatrix b = extract_features(ckpt, spec, corpus.taxonomy, recs, 4);
  CHECK(std::memcmp(a.features.data(), b.features.data(),
                    sizeof(double) * static_cast<size_t>(a.features.size())) == 0);

  FeatureMatrix c = extract_features(ckpt, spec, corpus.taxonomy, recs, 1);
  for (int64_t i = 0; i < a.features.size(); ++i) {
    CHECK(a.features[i] == doctest::Approx(c.features[i]).epsilon(1e-12));
  }
}

TEST_CASE("identical underlying clips produce identical feature rows") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  Checkpoint ckpt = trained_checkpoint(corpus, spec);
  // duplicate one record: same video twice in the list
  auto recs = split_of(corpus.manifest, Split::Test);
  std::vector<const AnnotationRecord*> doubled = {recs[0], recs[1], recs[0]};
  FeatureMatrix fm = extract_features(ckpt, spec, corpus.taxonomy, doubled, 2);
  for (int64_t j = 0; j < fm.features.dim(1); ++j) {
    CHECK(fm.features.at({0, j}) == doctest::Approx(fm.features.at({2, j})).epsilon(1e-12));
  }
}

TEST_CASE("fingerprint mismatch is a warning, not an error") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  Checkpoint ckpt = trained_checkpoint(corpus, spec);
  Checkpoint stale = ckpt;
  stale.taxonomy_sha256 = std::string(64, 'f');
  auto recs = split_of(corpus.manifest, Split::Test);
  FeatureMatrix fm = extract_features(stale, spec, corpus.taxonomy, recs, 4);
  REQUIRE(fm.warnings.size() == 1);
  CHECK(fm.warnings[0].find("taxonomy") != std::string::npos);
  // features themselves are head-independent, hence unchanged
  FeatureMatrix clean = extract_features(ckpt, spec, corpus.taxonomy, recs, 4);
  CHECK(std::memcmp(fm.features.data(), clean.features.data(),
                    sizeof(double) * static_cast<size_t>(clean.features.size())) == 0);
}

TEST_CASE("missing or mis-shaped trunk tensors are hard errors") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  Checkpoint ckpt = trained_checkpoint(corpus, spec);
  auto recs = split_of(corpus.manifest, Split::Test);

  Checkpoint missing = ckpt;
  for (size_t i = 0; i < missing.names.size(); ++i) {
    if (missing.names[i] == "stem3d.conv.weight") {
      missing.names.erase(missing.names.begin() + static_cast<long>(i));
      missing.tensors.erase(missing.tensors.begin() + static_cast<long>(i));
      break;
    }
  }
  CHECK_THROWS_AS(extract_features(missing, spec, corpus.taxonomy, recs, 4), ValidationError);

  Checkpoint reshaped = ckpt;
  for (size_t i = 0; i < reshaped.names.size(); ++i) {
    if (reshaped.names[i] == "stem3d.conv.weight") reshaped.tensors[i] = Tensor({2, 2});
  }
  CHECK_THROWS_AS(extract_features(reshaped, spec, corpus.taxonomy, recs, 4), ValidationError);

  // a missing head tensor is irrelevant to feature extraction
  Checkpoint headless = ckpt;
  for (size_t i = 0; i < headless.names.size();) {
    if (headless.names[i].rfind("head.", 0) == 0) {
      headless.names.erase(headless.names.begin() + static_cast<long>(i));
      headless.tensors.erase(headless.tensors.begin() + static_cast<long>(i));
    } else {
      ++i;
    }
  }
  CHECK_NOTHROW(extract_features(headless, spec, corpus.taxonomy, recs, 4));
}

TEST_SUITE_END();
