#include <doctest.h>

#include <algorithm>
#include <set>

#include "holivid/batching.hpp"
#include "holivid/error.hpp"
#include "holivid/synthetic.hpp"
#include "test_util.hpp"

using namespace holivid;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.n_train = 5;
  s.n_val = 2;
  s.n_test = 2;
  s.frames = 8;
  s.height = s.width = 16;
  s.static_labels = 2;
  s.dynamic_labels = 2;
  s.labels_min = 1;
  s.labels_max = 2;
  s.noise_std = 0.01;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("batching");

TEST_CASE("plan_batches: 5 records, batch 2 -> sizes 2,2,1 in identity order") {
  auto plan = plan_batches(5, 2, std::nullopt);
  REQUIRE(plan.size() == 3);
  CHECK(plan[0] == std::vector<int>{0, 1});
  CHECK(plan[1] == std::vector<int>{2, 3});
  CHECK(plan[2] == std::vector<int>{4});
}

TEST_CASE("plan_batches: shuffle is a seeded permutation") {
  auto a = plan_batches(7, 3, 99);
  auto b = plan_batches(7, 3, 99);
  CHECK(a == b);
  auto c = plan_batches(7, 3, 100);
  CHECK(a != c);

  std::set<int> seen;
  size_t total = 0;
  for (const auto& batch : a) {
    for (int i : batch) seen.insert(i);
    total += batch.size();
  }
  CHECK(total == 7);
  CHECK(seen.size() == 7);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 6);
}

TEST_CASE("plan_batches validates inputs") {
  CHECK_THROWS_AS(plan_batches(5, 0, std::nullopt), ValidationError);
  CHECK(plan_batches(0, 4, std::nullopt).empty());
}

TEST_CASE("target row: labels {0,3}, L=5 -> (1,0,0,1,0)") {
  AnnotationRecord rec;
  rec.labels = {0, 3};
  double row[5] = {9, 9, 9, 9, 9};
  fill_target_row(rec, 5, row);
  CHECK(row[0] == 1.0);
  CHECK(row[1] == 0.0);
  CHECK(row[2] == 0.0);
  CHECK(row[3] == 1.0);
  CHECK(row[4] == 0.0);
}

TEST_CASE("assemble_batch: shapes, binary targets, full mask") {
  SyntheticSpec s = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(s);
  Taxonomy& tax = corpus.taxonomy;
  auto recs = corpus.manifest.split_records(Split::Train);

  Batch b = assemble_batch(s, tax, recs, {1, 3, 4}, nullptr);
  CHECK(b.clips.shape() == std::vector<int64_t>{3, 3, 8, 16, 16});
  CHECK(b.targets.shape() == std::vector<int64_t>{3, 4});
  CHECK(b.mask.shape() == std::vector<int64_t>{3, 4});
  REQUIRE(b.video_ids.size() == 3);
  CHECK(b.video_ids[0] == recs[1]->video_id);

  for (int64_t i = 0; i < b.targets.size(); ++i) {
    CHECK((b.targets[i] == 0.0 || b.targets[i] == 1.0));
    CHECK(b.mask[i] == 1.0);
  }
  // each row has at least one positive
  for (int64_t r = 0; r < 3; ++r) {
    double sum = 0;
    for (int64_t l = 0; l < 4; ++l) sum += b.targets[r * 4 + l];
    CHECK(sum >= 1.0);
  }
  // clips match direct rendering
  Tensor direct = render_clip(s, *recs[1]);
  for (int64_t i = 0; i < direct.size(); ++i) CHECK(b.clips[i] == direct[i]);
}

TEST_CASE("clip cache returns identical tensors and survives reuse") {
  SyntheticSpec s = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(s);
  auto recs = corpus.manifest.split_records(Split::Train);

  ClipCache cache;
  const Tensor& a = cache.get(s, *recs[0]);
  const Tensor& b = cache.get(s, *recs[0]);
  CHECK(&a == &b);  // memoized

  Batch cached = assemble_batch(s, corpus.taxonomy, recs, {0, 1}, &cache);
  Batch fresh = assemble_batch(s, corpus.taxonomy, recs, {0, 1}, nullptr);
  for (int64_t i = 0; i < cached.clips.size(); ++i) CHECK(cached.clips[i] == fresh.clips[i]);
}

TEST_SUITE_END();
