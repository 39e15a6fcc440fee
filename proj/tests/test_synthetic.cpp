#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "holivid/error.hpp"
#include "holivid/synthetic.hpp"
#include "test_util.hpp"

using namespace holivid;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_train = 12;
  s.n_val = 4;
  s.n_test = 4;
  s.frames = 8;
  s.height = s.width = 32;
  s.static_labels = 4;
  s.dynamic_labels = 4;
  s.labels_min = 1;
  s.labels_max = 3;
  s.noise_std = 0.02;
  s.seed = 7;
  return s;
}

AnnotationRecord rec_with(const std::string& id, std::vector<int> labels) {
  AnnotationRecord r;
  r.video_id = id;
  r.split = Split::Train;
  r.labels = std::move(labels);
  return r;
}

}  // namespace

TEST_SUITE_BEGIN("synthetic");

TEST_CASE("generation is deterministic, bitwise") {
  SyntheticSpec s = small_spec();
  SyntheticCorpus a = generate_synthetic(s);
  SyntheticCorpus b = generate_synthetic(s);
  CHECK(a.taxonomy.to_csv() == b.taxonomy.to_csv());
  CHECK(manifest_to_jsonl(a.manifest) == manifest_to_jsonl(b.manifest));

  s.seed = 8;
  SyntheticCorpus c = generate_synthetic(s);
  CHECK(manifest_to_jsonl(a.manifest) != manifest_to_jsonl(c.manifest));
}

TEST_CASE("taxonomy spans static and dynamic categories") {
  SyntheticSpec s = small_spec();
  Taxonomy tax = make_synthetic_taxonomy(s);
  CHECK(tax.size() == 8);
  std::set<Category> cats;
  for (const auto& l : tax.labels()) cats.insert(l.category);
  CHECK(cats.size() >= 2);
  // first S ids are static (appearance categories), rest dynamic
  for (int id = 0; id < s.static_labels; ++id) {
    Category c = tax.label(id).category;
    CHECK(c != Category::Action);
    CHECK(c != Category::Event);
  }
  for (int id = s.static_labels; id < tax.size(); ++id) {
    Category c = tax.label(id).category;
    CHECK((c == Category::Action || c == Category::Event));
  }
}

TEST_CASE("manifest structure: splits, ids, label ranges") {
  SyntheticSpec s = small_spec();
  SyntheticCorpus corpus = generate_synthetic(s);
  CHECK(corpus.manifest.records.size() == 20);
  CHECK(corpus.manifest.split_records(Split::Train).size() == 12);
  CHECK(corpus.manifest.split_records(Split::Val).size() == 4);
  CHECK(corpus.manifest.split_records(Split::Test).size() == 4);
  check_label_range(corpus.manifest, corpus.taxonomy.size());
  for (const auto& r : corpus.manifest.records) {
    CHECK(r.labels.size() >= static_cast<size_t>(s.labels_min));
    CHECK(r.labels.size() <= static_cast<size_t>(s.labels_max));
  }
  CHECK(corpus.manifest.records[0].video_id == "syn-train-000000");
}

TEST_CASE("render: shape, range, determinism") {
  SyntheticSpec s = small_spec();
  SyntheticCorpus corpus = generate_synthetic(s);
  const auto& rec = corpus.manifest.records[0];
  Tensor a = render_clip(s, rec);
  Tensor b = render_clip(s, rec);
  CHECK(a.shape() == std::vector<int64_t>{3, 8, 32, 32});
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);
    CHECK(a[i] >= 0.0);
    CHECK(a[i] <= 1.0);
  }
}

TEST_CASE("render via manifest lookup; unknown id rejected") {
  SyntheticSpec s = small_spec();
  SyntheticCorpus corpus = generate_synthetic(s);
  Tensor a = render_clip(s, corpus.manifest, "syn-val-000001");
  CHECK(a.size() > 0);
  CHECK_THROWS_AS(render_clip(s, corpus.manifest, "syn-val-999999"), ValidationError);
}

TEST_CASE("no labels, no noise -> constant background") {
  SyntheticSpec s = small_spec();
  s.noise_std = 0.0;
  Tensor clip = render_clip(s, rec_with("bg-probe", {}));
  for (int64_t i = 0; i < clip.size(); ++i) CHECK(clip[i] == doctest::Approx(0.25));
}

TEST_CASE("static labels are present in every frame identically") {
  SyntheticSpec s = small_spec();
  s.noise_std = 0.0;
  for (int label = 0; label < s.static_labels; ++label) {
    Tensor clip = render_clip(s, rec_with("static-probe", {label}));
    const int64_t frame = 32 * 32;
    for (int c = 0; c < 3; ++c) {
      const double* base = clip.data() + c * s.frames * frame;
      for (int t = 1; t < s.frames; ++t) {
        for (int64_t i = 0; i < frame; ++i) CHECK(base[i] == base[t * frame + i]);
      }
    }
    // and the frame is not all background
    double mx = 0;
    for (int64_t i = 0; i < clip.size(); ++i) mx = std::max(mx, std::abs(clip[i] - 0.25));
    CHECK(mx > 0.2);
  }
}

TEST_CASE("distinct static labels occupy distinct pixels or colors") {
  SyntheticSpec s = small_spec();
  s.noise_std = 0.0;
  std::vector<Tensor> clips;
  for (int label = 0; label < s.static_labels; ++label)
    clips.push_back(render_clip(s, rec_with("p", {label})));
  for (int i = 0; i < s.static_labels; ++i) {
    for (int j = i + 1; j < s.static_labels; ++j) {
      double diff = 0;
      for (int64_t k = 0; k < clips[0].size(); ++k)
        diff = std::max(diff, std::abs(clips[static_cast<size_t>(i)][k] -
                                       clips[static_cast<size_t>(j)][k]));
      CHECK(diff > 0.2);
    }
  }
}

TEST_CASE("dynamic labels: any single frame is statistically identical across labels") {
  // The designed property: with noise off, a frame from a clip carrying only
  // dynamic label d has exactly the same pixel histogram for every d — the
  // label only controls the angular velocity, never the appearance.
  SyntheticSpec s = small_spec();
  s.noise_std = 0.0;
  const int64_t frame = 32 * 32;
  std::vector<std::multiset<double>> histograms;
  for (int d = 0; d < s.dynamic_labels; ++d) {
    int label = s.static_labels + d;
    std::multiset<double> hist;
    for (int v = 0; v < 25; ++v) {
      Tensor clip = render_clip(s, rec_with("dyn-" + std::to_string(v), {label}));
      // red channel, frame 0
      for (int64_t i = 0; i < frame; ++i) hist.insert(clip[i]);
    }
    histograms.push_back(std::move(hist));
  }
  for (size_t d = 1; d < histograms.size(); ++d) CHECK(histograms[d] == histograms[0]);
}

namespace {

// Centroid of bright pixels in the bottom half of one frame (the moving dot).
std::pair<double, double> dot_center(const Tensor& clip, int t, int h, int w) {
  const int64_t frame = static_cast<int64_t>(h) * w;
  const double* base = clip.data() + t * frame;  // red channel
  double sy = 0, sx = 0, n = 0;
  for (int y = h / 2; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (base[y * w + x] > 0.5) {
        sy += y;
        sx += x;
        n += 1;
      }
    }
  }
  REQUIRE(n > 0);
  return {sy / n, sx / n};
}

}  // namespace

TEST_CASE("dynamic labels: measured angular velocity matches the label") {
  // The dot orbits (0.75H, 0.5W); the label picks the signed angular step.
  // Estimate the step from consecutive dot centroids and check the expected
  // ratios: labels S+0/S+1 move at +-1 step, S+2/S+3 at +-2 steps.
  SyntheticSpec s = small_spec();
  s.noise_std = 0.0;
  const double cy = 0.75 * s.height, cx = 0.5 * s.width;
  auto mean_step = [&](int label) {
    Tensor clip = render_clip(s, rec_with("omega-probe", {label}));
    double total = 0;
    int count = 0;
    double prev = 0;
    for (int t = 0; t < s.frames; ++t) {
      auto [y, x] = dot_center(clip, t, s.height, s.width);
      double theta = std::atan2(y - cy, x - cx);
      if (t > 0) {
        double d = theta - prev;
        while (d > M_PI) d -= 2 * M_PI;
        while (d <= -M_PI) d += 2 * M_PI;
        total += d;
        ++count;
      }
      prev = theta;
    }
    return total / count;
  };
  const double unit = 2.0 * M_PI / s.frames;
  const double tol = 0.35 * unit;  // integer pixel grid quantizes the centroid
  CHECK(std::abs(mean_step(s.static_labels + 0) - unit) < tol);
  CHECK(std::abs(mean_step(s.static_labels + 1) + unit) < tol);
  CHECK(std::abs(mean_step(s.static_labels + 2) - 2 * unit) < tol);
  CHECK(std::abs(mean_step(s.static_labels + 3) + 2 * unit) < tol);
}

TEST_CASE("noise is seeded per video and bounded to [0,1]") {
  SyntheticSpec s = small_spec();
  s.noise_std = 0.4;  // large, to exercise clamping
  Tensor a = render_clip(s, rec_with("n0", {0}));
  Tensor b = render_clip(s, rec_with("n1", {0}));
  double diff = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    CHECK(a[i] >= 0.0);
    CHECK(a[i] <= 1.0);
  }
  CHECK(diff > 0.0);
}

TEST_CASE("spec validation") {
  SyntheticSpec s = small_spec();
  s.frames = 12;
  CHECK_THROWS_AS(validate_spec(s), ValidationError);
  s = small_spec();
  s.height = s.width = 12;
  CHECK_THROWS_AS(validate_spec(s), ValidationError);
  s = small_spec();
  s.height = 30;
  CHECK_THROWS_AS(validate_spec(s), ValidationError);  // H == W and multiple of 4
  s = small_spec();
  s.labels_min = 3;
  s.labels_max = 2;
  CHECK_THROWS_AS(validate_spec(s), ValidationError);
  s = small_spec();
  s.labels_max = 9;  // more than S + D
  CHECK_THROWS_AS(validate_spec(s), ValidationError);
  s = small_spec();
  s.noise_std = -0.1;
  CHECK_THROWS_AS(validate_spec(s), ValidationError);
}

TEST_CASE("template capacity and aliasing guards") {
  SyntheticSpec s = small_spec();
  s.static_labels = 500;  // cannot fit in the top half of a 32x32 frame
  s.labels_max = 3;
  CHECK_THROWS_AS(validate_spec(s), ValidationError);

  s = small_spec();
  s.frames = 8;
  s.dynamic_labels = 8;  // max angular step reaches the aliasing bound at T=8
  CHECK_THROWS_AS(validate_spec(s), ValidationError);
  s.frames = 16;
  CHECK_NOTHROW(validate_spec(s));
}

TEST_CASE("spec json round-trip and strict parsing") {
  SyntheticSpec s = small_spec();
  std::string text = spec_to_json(s);
  SyntheticSpec back = spec_from_json_text(text);
  CHECK(spec_to_json(back) == text);
  CHECK(back.seed == s.seed);
  CHECK(back.noise_std == s.noise_std);

  CHECK_THROWS_WITH_AS(spec_from_json_text(R"({"n_train": 4, "mystery": 1})"),
                       doctest::Contains("mystery"), ValidationError);
  CHECK_THROWS_AS(spec_from_json_text("not json"), ValidationError);
}

TEST_SUITE_END();
