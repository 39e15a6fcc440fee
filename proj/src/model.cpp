#include "holivid/model.hpp"

#include <cstring>

#include "holivid/error.hpp"

namespace holivid {

const char* backbone_name(Backbone b) { return b == Backbone::R18 ? "r18" : "r50"; }
const char* mode_name(Mode m) {
  switch (m) {
    case Mode::HatNet: return "hatnet";
    case Mode::ResNet3d: return "resnet3d";
    case Mode::Branch2dOnly: return "branch2d_only";
    case Mode::Branch3dOnly: return "branch3d_only";
  }
  return "?";
}
const char* head_mode_name(HeadMode h) { return h == HeadMode::Single ? "single" : "multitask"; }

std::optional<Backbone> backbone_from_name(const std::string& s) {
  if (s == "r18") return Backbone::R18;
  if (s == "r50") return Backbone::R50;
  return std::nullopt;
}
std::optional<Mode> mode_from_name(const std::string& s) {
  if (s == "hatnet") return Mode::HatNet;
  if (s == "resnet3d") return Mode::ResNet3d;
  if (s == "branch2d_only") return Mode::Branch2dOnly;
  if (s == "branch3d_only") return Mode::Branch3dOnly;
  return std::nullopt;
}
std::optional<HeadMode> head_mode_from_name(const std::string& s) {
  if (s == "single") return HeadMode::Single;
  if (s == "multitask") return HeadMode::MultiTask;
  return std::nullopt;
}

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.input_size < 32 || cfg.input_size % 16 != 0)
    throw ValidationError("model: input_size must be >= 32 and divisible by 16");
  if (cfg.frames < 4 || cfg.frames % 2 != 0)
    throw ValidationError("model: frames must be >= 4 and even");
  for (int64_t c : cfg.stage_channels) {
    if (c < 1) throw ValidationError("model: stage_channels must be positive");
  }
}

namespace {

struct BackbonePlan {
  ResidualBlock::Kind kind;
  std::array<int, 4> blocks;
  int64_t expansion;
};

BackbonePlan backbone_plan(Backbone b) {
  if (b == Backbone::R18) return {ResidualBlock::Kind::Basic, {2, 2, 2, 2}, 1};
  return {ResidualBlock::Kind::Bottleneck, {3, 4, 6, 3}, 4};
}

}  // namespace

ShapePlan infer_shape_plan(const ModelConfig& cfg, const Taxonomy& tax) {
  validate_model_config(cfg);
  BackbonePlan bp = backbone_plan(cfg.backbone);
  ShapePlan plan;
  // stems: stride (1,2,2), no pooling afterwards
  plan.stem = {cfg.stage_channels[0], cfg.frames, cfg.input_size / 2, cfg.input_size / 2};
  StageShape cur = plan.stem;
  for (int s = 0; s < 4; ++s) {
    int stride = s == 0 ? 1 : 2;
    StageShape out;
    out.channels = cfg.stage_channels[static_cast<size_t>(s)] * bp.expansion;
    out.t = cur.t;  // temporal stride 1 everywhere
    out.h = cur.h / stride;
    out.w = cur.w / stride;
    plan.stage_out[static_cast<size_t>(s)] = out;
    plan.merged[static_cast<size_t>(s)] = out;  // merge preserves shape (2C -> C)
    cur = out;
  }
  plan.feature_dim = cur.channels;
  if (cfg.head_mode == HeadMode::Single) {
    plan.head_widths = {tax.size()};
  } else {
    auto counts = tax.category_counts();
    plan.head_widths.assign(counts.begin(), counts.end());
  }
  plan.total_logits = tax.size();
  return plan;
}

VideoNet::VideoNet(const ModelConfig& cfg, const Taxonomy& tax) : cfg_(cfg) {
  validate_model_config(cfg);
  plan_ = infer_shape_plan(cfg, tax);
  category_ids_ = tax.ids_by_category();
  has_2d_ = cfg.mode == Mode::HatNet || cfg.mode == Mode::Branch2dOnly;
  has_3d_ = cfg.mode != Mode::Branch2dOnly;  // hatnet, resnet3d, branch3d_only
  has_merge_ = cfg.mode == Mode::HatNet;

  BackbonePlan bp = backbone_plan(cfg.backbone);
  const int64_t stem_ch = cfg.stage_channels[0];

  if (has_2d_) {
    ConvSpec s;
    s.in_ch = 3;
    s.out_ch = stem_ch;
    s.kt = 1; s.kh = s.kw = 3;
    s.st = 1; s.sh = s.sw = 2;
    s.pt = 0; s.ph = s.pw = 1;
    s.bias = false;
    stem2d_conv_ = Conv3d(s);
    stem2d_norm_ = GroupNorm(stem_ch, true);
  }
  if (has_3d_) {
    ConvSpec s;
    s.in_ch = 3;
    s.out_ch = stem_ch;
    s.kt = s.kh = s.kw = 3;
    s.st = 1; s.sh = s.sw = 2;
    s.pt = 1; s.ph = s.pw = 1;
    s.bias = false;
    stem3d_conv_ = Conv3d(s);
    stem3d_norm_ = GroupNorm(stem_ch, false);
  }

  int64_t in_ch = stem_ch;
  for (int s = 0; s < 4; ++s) {
    int64_t mid = cfg.stage_channels[static_cast<size_t>(s)];
    int64_t out = mid * bp.expansion;
    int stride = s == 0 ? 1 : 2;
    if (has_2d_) stages2d_.emplace_back(bp.kind, bp.blocks[static_cast<size_t>(s)], in_ch, mid, out, stride, false);
    if (has_3d_) stages3d_.emplace_back(bp.kind, bp.blocks[static_cast<size_t>(s)], in_ch, mid, out, stride, true);
    if (has_merge_) merges_.emplace_back(out, cfg.merge_norm_relu);
    in_ch = out;
  }

  const int64_t d = plan_.feature_dim;
  if (cfg.head_mode == HeadMode::Single) {
    head_single_ = Linear(d, tax.size());
  } else {
    for (int c = 0; c < kNumCategories; ++c)
      head_multi_.emplace_back(d, static_cast<int64_t>(category_ids_[static_cast<size_t>(c)].size()));
  }
}

ParamRefs VideoNet::params() {
  ParamRefs out;
  if (has_2d_) {
    stem2d_conv_.collect("stem2d.conv", out);
    stem2d_norm_.collect("stem2d.norm", out);
  }
  if (has_3d_) {
    stem3d_conv_.collect("stem3d.conv", out);
    stem3d_norm_.collect("stem3d.norm", out);
  }
  for (int s = 0; s < 4; ++s) {
    std::string stage = "stage" + std::to_string(s + 1);
    if (has_2d_) stages2d_[static_cast<size_t>(s)].collect(stage + ".2d", out);
    if (has_3d_) stages3d_[static_cast<size_t>(s)].collect(stage + ".3d", out);
    if (has_merge_) merges_[static_cast<size_t>(s)].collect("merge" + std::to_string(s + 1), out);
  }
  if (cfg_.head_mode == HeadMode::Single) {
    head_single_.collect("head.fc", out);
  } else {
    for (int c = 0; c < kNumCategories; ++c)
      head_multi_[static_cast<size_t>(c)].collect(std::string("head.") + category_name(static_cast<Category>(c)), out);
  }
  return out;
}

void VideoNet::init_params(uint64_t seed) {
  // Parameter-name-derived seeds: initialization is independent of
  // registration order and stable across modes sharing submodules.
  if (has_2d_) {
    stem2d_conv_.init(derive_seed(seed, "stem2d.conv"));
    stem2d_norm_.init();
  }
  if (has_3d_) {
    stem3d_conv_.init(derive_seed(seed, "stem3d.conv"));
    stem3d_norm_.init();
  }
  for (int s = 0; s < 4; ++s) {
    std::string stage = "stage" + std::to_string(s + 1);
    if (has_2d_) stages2d_[static_cast<size_t>(s)].init(seed, stage + ".2d");
    if (has_3d_) stages3d_[static_cast<size_t>(s)].init(seed, stage + ".3d");
    if (has_merge_) merges_[static_cast<size_t>(s)].init(derive_seed(seed, "merge" + std::to_string(s + 1)));
  }
  if (cfg_.head_mode == HeadMode::Single) {
    head_single_.init(derive_seed(seed, "head.fc"));
  } else {
    for (int c = 0; c < kNumCategories; ++c)
      head_multi_[static_cast<size_t>(c)].init(
          derive_seed(seed, std::string("head.") + category_name(static_cast<Category>(c))));
  }
}

void VideoNet::zero_grads() {
  for (Param* p : params()) p->grad.fill(0.0);
}

int64_t VideoNet::param_count() {
  int64_t n = 0;
  for (Param* p : params()) n += p->value.size();
  return n;
}

Tensor VideoNet::forward_trunk(const Tensor& clips) {
  if (clips.rank() != 5 || clips.dim(1) != 3)
    throw ValidationError("model: clips must be (B, 3, T, H, W)");
  if (clips.dim(2) != cfg_.frames || clips.dim(3) != cfg_.input_size || clips.dim(4) != cfg_.input_size)
    throw ValidationError("model: clip shape does not match the config (T=" +
                          std::to_string(cfg_.frames) + ", S=" + std::to_string(cfg_.input_size) + ")");
  Tensor x2, x3;
  if (has_2d_) x2 = stem2d_relu_.forward(stem2d_norm_.forward(stem2d_conv_.forward(clips)));
  if (has_3d_) x3 = stem3d_relu_.forward(stem3d_norm_.forward(stem3d_conv_.forward(clips)));

  if (has_merge_) {
    for (int s = 0; s < 4; ++s) {
      Tensor a = stages2d_[static_cast<size_t>(s)].forward(x2);
      Tensor b = stages3d_[static_cast<size_t>(s)].forward(x3);
      Tensor fused = merges_[static_cast<size_t>(s)].forward(a, b);
      x2 = fused;  // the fused map feeds both next-stage branches
      x3 = std::move(fused);
    }
    return pool_.forward(x3);
  }
  if (has_2d_) {
    for (auto& st : stages2d_) x2 = st.forward(x2);
    return pool_.forward(x2);
  }
  for (auto& st : stages3d_) x3 = st.forward(x3);
  return pool_.forward(x3);
}

Tensor VideoNet::forward_features(const Tensor& clips) { return forward_trunk(clips); }

HeadOutput VideoNet::forward(const Tensor& clips) {
  Tensor feat = forward_trunk(clips);
  HeadOutput out;
  if (cfg_.head_mode == HeadMode::Single) {
    out.logits = head_single_.forward(feat);
  } else {
    for (int c = 0; c < kNumCategories; ++c)
      out.blocks.push_back(head_multi_[static_cast<size_t>(c)].forward(feat));
    out.logits = scatter_blocks(out.blocks, category_ids_, plan_.total_logits);
  }
  return out;
}

Tensor VideoNet::backward_trunk_input(const Tensor& dpooled) {
  Tensor g = pool_.backward(dpooled);
  if (has_merge_) {
    for (int s = 3; s >= 0; --s) {
      auto [ga, gb] = merges_[static_cast<size_t>(s)].backward(g);
      Tensor g2 = stages2d_[static_cast<size_t>(s)].backward(ga);
      Tensor g3 = stages3d_[static_cast<size_t>(s)].backward(gb);
      if (s > 0) {
        add_inplace(g2, g3);
        g = std::move(g2);
      } else {
        Tensor gc2 = stem2d_conv_.backward(stem2d_norm_.backward(stem2d_relu_.backward(g2)));
        Tensor gc3 = stem3d_conv_.backward(stem3d_norm_.backward(stem3d_relu_.backward(g3)));
        add_inplace(gc2, gc3);
        return gc2;
      }
    }
  }
  if (has_2d_ && !has_merge_) {
    for (auto it = stages2d_.rbegin(); it != stages2d_.rend(); ++it) g = it->backward(g);
    return stem2d_conv_.backward(stem2d_norm_.backward(stem2d_relu_.backward(g)));
  }
  if (has_3d_ && !has_merge_) {
    for (auto it = stages3d_.rbegin(); it != stages3d_.rend(); ++it) g = it->backward(g);
    return stem3d_conv_.backward(stem3d_norm_.backward(stem3d_relu_.backward(g)));
  }
  return g;
}

void VideoNet::backward(const Tensor& dlogits) {
  Tensor dfeat;
  if (cfg_.head_mode == HeadMode::Single) {
    dfeat = head_single_.backward(dlogits);
  } else {
    std::vector<Tensor> dblocks = gather_blocks(dlogits, category_ids_);
    for (int c = 0; c < kNumCategories; ++c) {
      Tensor dh = head_multi_[static_cast<size_t>(c)].backward(dblocks[static_cast<size_t>(c)]);
      if (c == 0) dfeat = std::move(dh);
      else add_inplace(dfeat, dh);
    }
  }
  backward_trunk_input(dfeat);
}

Tensor scatter_blocks(const std::vector<Tensor>& blocks,
                      const std::array<std::vector<int>, kNumCategories>& ids, int64_t total) {
  if (blocks.size() != kNumCategories) throw ValidationError("scatter: expected six blocks");
  const int64_t b = blocks[0].dim(0);
  Tensor full({b, total});
  for (int c = 0; c < kNumCategories; ++c) {
    const auto& cat_ids = ids[static_cast<size_t>(c)];
    const Tensor& blk = blocks[static_cast<size_t>(c)];
    if (blk.dim(1) != static_cast<int64_t>(cat_ids.size()))
      throw ValidationError("scatter: block width mismatch");
    for (int64_t i = 0; i < b; ++i) {
      for (size_t j = 0; j < cat_ids.size(); ++j)
        full[i * total + cat_ids[j]] = blk[i * blk.dim(1) + static_cast<int64_t>(j)];
    }
  }
  return full;
}

std::vector<Tensor> gather_blocks(const Tensor& full,
                                  const std::array<std::vector<int>, kNumCategories>& ids) {
  const int64_t b = full.dim(0), total = full.dim(1);
  std::vector<Tensor> blocks;
  for (int c = 0; c < kNumCategories; ++c) {
    const auto& cat_ids = ids[static_cast<size_t>(c)];
    Tensor blk({b, static_cast<int64_t>(cat_ids.size())});
    for (int64_t i = 0; i < b; ++i) {
      for (size_t j = 0; j < cat_ids.size(); ++j)
        blk[i * blk.dim(1) + static_cast<int64_t>(j)] = full[i * total + cat_ids[j]];
    }
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

}  // namespace holivid
