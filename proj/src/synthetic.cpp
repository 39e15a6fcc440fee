#include "holivid/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "holivid/error.hpp"
#include "holivid/rng.hpp"

namespace holivid {

using json = nlohmann::json;

namespace {

constexpr double kBackground = 0.25;
constexpr double kDotValue = 0.9;
constexpr int kTile = 3;       // square template / dot edge length (odd)
constexpr int kPitch = 5;      // grid pitch for static templates
constexpr double kTwoPi = 6.283185307179586;

// Static template grid capacity in the top half, margin 1 on each side.
int grid_cols(const SyntheticSpec& s) { return (s.width - 2 - kTile) / kPitch + 1; }
int grid_rows(const SyntheticSpec& s) { return (s.height / 2 - 2 - kTile) / kPitch + 1; }

struct Color {
  double r, g, b;
};

Color static_color(int label) {
  int bits = (label % 7) + 1;  // never all-zero; cycles through 7 colors
  auto ch = [bits](int i) { return (bits >> i) & 1 ? 0.95 : 0.05; };
  return {ch(0), ch(1), ch(2)};
}

void paint(Tensor& clip, int t, int top, int left, const Color& c) {
  const int T = static_cast<int>(clip.dim(1));
  const int H = static_cast<int>(clip.dim(2));
  const int W = static_cast<int>(clip.dim(3));
  double* base = clip.data();
  const double vals[3] = {c.r, c.g, c.b};
  for (int ch = 0; ch < 3; ++ch) {
    double* plane = base + ((static_cast<int64_t>(ch) * T + t) * H) * W;
    for (int dy = 0; dy < kTile; ++dy) {
      double* row = plane + static_cast<int64_t>(top + dy) * W + left;
      for (int dx = 0; dx < kTile; ++dx) row[dx] = vals[ch];
    }
  }
}

// Signed angular step per frame for dynamic label index j (0-based within the
// dynamic block): pair p gets magnitudes p+1, directions alternate so that
// labels 2p and 2p+1 trace the same positions in opposite order.
double angular_step(int j, int frames) {
  int pair = j / 2;
  double dir = (j % 2 == 0) ? 1.0 : -1.0;
  return dir * (pair + 1) * kTwoPi / frames;
}

}  // namespace

void validate_spec(const SyntheticSpec& s) {
  if (s.n_train < 0 || s.n_val < 0 || s.n_test < 0)
    throw ValidationError("synthetic: negative split size");
  if (s.frames != 8 && s.frames != 16 && s.frames != 32)
    throw ValidationError("synthetic: frames must be one of {8,16,32}");
  if (s.height != s.width) throw ValidationError("synthetic: height and width must be equal");
  if (s.height < 16 || s.height % 4 != 0)
    throw ValidationError("synthetic: height must be >= 16 and a multiple of 4");
  if (s.static_labels < 1 || s.dynamic_labels < 1)
    throw ValidationError("synthetic: need at least one static and one dynamic label");
  int total = s.static_labels + s.dynamic_labels;
  if (s.labels_min < 1 || s.labels_min > s.labels_max || s.labels_max > total)
    throw ValidationError("synthetic: labels per video range must satisfy 1 <= min <= max <= S+D");
  if (s.noise_std < 0.0) throw ValidationError("synthetic: noise_std must be >= 0");
  if (s.static_labels > grid_cols(s) * grid_rows(s))
    throw ValidationError("synthetic: height/width too small to place all requested templates (capacity " +
                          std::to_string(grid_cols(s) * grid_rows(s)) + ")");
  // The largest angular step must stay below pi per frame, otherwise motion
  // direction aliases and labels stop being decidable from frame pairs.
  int max_mag = (s.dynamic_labels - 1) / 2 + 1;
  if (2 * max_mag >= s.frames)
    throw ValidationError("synthetic: too many dynamic labels for this frame count (motion aliases)");
}

Taxonomy make_synthetic_taxonomy(const SyntheticSpec& spec) {
  validate_spec(spec);
  static constexpr Category kStaticCats[4] = {Category::Scene, Category::Object,
                                              Category::Attribute, Category::Concept};
  static constexpr Category kDynamicCats[2] = {Category::Action, Category::Event};
  std::vector<LabelDef> labels;
  char buf[32];
  for (int i = 0; i < spec.static_labels; ++i) {
    std::snprintf(buf, sizeof(buf), "static_%02d", i);
    labels.push_back({i, buf, kStaticCats[i % 4]});
  }
  for (int j = 0; j < spec.dynamic_labels; ++j) {
    std::snprintf(buf, sizeof(buf), "motion_%02d", j);
    labels.push_back({spec.static_labels + j, buf, kDynamicCats[j % 2]});
  }
  return Taxonomy(std::move(labels));
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  validate_spec(spec);
  SyntheticCorpus corpus;
  corpus.taxonomy = make_synthetic_taxonomy(spec);

  const int total_labels = spec.static_labels + spec.dynamic_labels;
  const struct {
    Split split;
    int count;
  } splits[3] = {{Split::Train, spec.n_train}, {Split::Val, spec.n_val}, {Split::Test, spec.n_test}};
  for (const auto& sp : splits) {
    for (int i = 0; i < sp.count; ++i) {
      Rng rng(derive_seed(spec.seed, "labels", static_cast<uint64_t>(sp.split), static_cast<uint64_t>(i)));
      int k = spec.labels_min +
              static_cast<int>(rng.uniform_index(static_cast<uint64_t>(spec.labels_max - spec.labels_min + 1)));
      std::vector<int> pool(static_cast<size_t>(total_labels));
      for (int l = 0; l < total_labels; ++l) pool[static_cast<size_t>(l)] = l;
      // partial Fisher-Yates: first k entries become the sample
      for (int l = 0; l < k; ++l) {
        int j = l + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(total_labels - l)));
        std::swap(pool[static_cast<size_t>(l)], pool[static_cast<size_t>(j)]);
      }
      AnnotationRecord rec;
      char buf[48];
      std::snprintf(buf, sizeof(buf), "syn-%s-%06d", split_name(sp.split), i);
      rec.video_id = buf;
      rec.split = sp.split;
      rec.labels.assign(pool.begin(), pool.begin() + k);
      std::sort(rec.labels.begin(), rec.labels.end());
      corpus.manifest.records.push_back(std::move(rec));
    }
  }
  return corpus;
}

Tensor render_clip(const SyntheticSpec& spec, const AnnotationRecord& record) {
  validate_spec(spec);
  const int T = spec.frames, H = spec.height, W = spec.width;
  for (int id : record.labels) {
    if (id < 0 || id >= spec.static_labels + spec.dynamic_labels)
      throw ValidationError("render_clip: label id " + std::to_string(id) + " outside the spec's label space");
  }

  Tensor clip = Tensor::full({3, T, H, W}, kBackground);

  const int cols = grid_cols(spec);
  for (int id : record.labels) {
    if (id >= spec.static_labels) continue;
    int top = 1 + kPitch * (id / cols);
    int left = 1 + kPitch * (id % cols);
    Color c = static_color(id);
    for (int t = 0; t < T; ++t) paint(clip, t, top, left, c);
  }

  const double cy = 0.75 * H, cx = 0.5 * W, radius = H / 8.0;
  for (int id : record.labels) {
    if (id < spec.static_labels) continue;
    int j = id - spec.static_labels;
    Rng phase_rng(derive_seed(spec.seed, record.video_id, 0x9a5e, static_cast<uint64_t>(id)));
    double theta0 = phase_rng.uniform(0.0, kTwoPi);
    double step = angular_step(j, T);
    for (int t = 0; t < T; ++t) {
      double theta = theta0 + step * t;
      int py = static_cast<int>(std::lround(cy + radius * std::sin(theta)));
      int px = static_cast<int>(std::lround(cx + radius * std::cos(theta)));
      paint(clip, t, py - kTile / 2, px - kTile / 2, {kDotValue, kDotValue, kDotValue});
    }
  }

  if (spec.noise_std > 0.0) {
    Rng noise_rng(derive_seed(spec.seed, record.video_id, 0x401e));
    double* d = clip.data();
    for (int64_t i = 0; i < clip.size(); ++i) {
      d[i] = std::clamp(d[i] + spec.noise_std * noise_rng.gaussian(), 0.0, 1.0);
    }
  }
  return clip;
}

Tensor render_clip(const SyntheticSpec& spec, const Manifest& manifest, const std::string& video_id) {
  for (const auto& r : manifest.records) {
    if (r.video_id == video_id) return render_clip(spec, r);
  }
  throw ValidationError("render_clip: unknown video_id \"" + video_id + "\"");
}

std::string spec_to_json(const SyntheticSpec& s) {
  json j;
  j["n_train"] = s.n_train;
  j["n_val"] = s.n_val;
  j["n_test"] = s.n_test;
  j["frames"] = s.frames;
  j["height"] = s.height;
  j["width"] = s.width;
  j["static_labels"] = s.static_labels;
  j["dynamic_labels"] = s.dynamic_labels;
  j["labels_min"] = s.labels_min;
  j["labels_max"] = s.labels_max;
  j["noise_std"] = s.noise_std;
  j["seed"] = s.seed;
  return j.dump(2) + "\n";
}

static SyntheticSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("synthetic spec: not a JSON object");
  SyntheticSpec s;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "n_train") s.n_train = v.get<int>();
      else if (key == "n_val") s.n_val = v.get<int>();
      else if (key == "n_test") s.n_test = v.get<int>();
      else if (key == "frames") s.frames = v.get<int>();
      else if (key == "height") s.height = v.get<int>();
      else if (key == "width") s.width = v.get<int>();
      else if (key == "static_labels") s.static_labels = v.get<int>();
      else if (key == "dynamic_labels") s.dynamic_labels = v.get<int>();
      else if (key == "labels_min") s.labels_min = v.get<int>();
      else if (key == "labels_max") s.labels_max = v.get<int>();
      else if (key == "noise_std") s.noise_std = v.get<double>();
      else if (key == "seed") s.seed = v.get<uint64_t>();
      else throw ValidationError("synthetic spec: unknown key \"" + key + "\"");
    } catch (const json::exception& e) {
      throw ValidationError("synthetic spec: bad value for \"" + key + "\": " + e.what());
    }
  }
  validate_spec(s);
  return s;
}

SyntheticSpec spec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synthetic spec: parse error: ") + e.what());
  }
  return spec_from_json(j);
}

SyntheticSpec load_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("synthetic spec: cannot open: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return spec_from_json_text(ss.str());
}

void save_spec(const std::string& path, const SyntheticSpec& spec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("synthetic spec: cannot open for writing: " + path);
  os << spec_to_json(spec);
  if (!os) throw ValidationError("synthetic spec: write failed: " + path);
}

}  // namespace holivid
