#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "holivid/layers.hpp"
#include "holivid/taxonomy.hpp"
#include "holivid/tensor.hpp"

namespace holivid {

enum class Backbone { R18, R50 };
enum class Mode { HatNet, ResNet3d, Branch2dOnly, Branch3dOnly };
enum class HeadMode { Single, MultiTask };

const char* backbone_name(Backbone b);
const char* mode_name(Mode m);
const char* head_mode_name(HeadMode h);
std::optional<Backbone> backbone_from_name(const std::string&);
std::optional<Mode> mode_from_name(const std::string&);
std::optional<HeadMode> head_mode_from_name(const std::string&);

struct ModelConfig {
  Backbone backbone = Backbone::R18;
  Mode mode = Mode::HatNet;
  HeadMode head_mode = HeadMode::Single;
  int frames = 16;
  int input_size = 112;  // H == W
  std::array<int64_t, 4> stage_channels = {64, 128, 256, 512};
  bool merge_norm_relu = true;
};

void validate_model_config(const ModelConfig& cfg);

// Per-tensor shape of one pipeline point.
struct StageShape {
  int64_t channels = 0, t = 0, h = 0, w = 0;
};

// Exact shape arithmetic for every stage, computed without building tensors.
struct ShapePlan {
  StageShape stem;                       // both branch stems share this shape
  std::array<StageShape, 4> stage_out;   // branch output per stage
  std::array<StageShape, 4> merged;      // after merge_reduce (hatnet only)
  int64_t feature_dim = 0;               // pooled width (512 r18 / 2048 r50 at default channels)
  std::vector<int64_t> head_widths;      // six per-category widths (multitask) or {L}
  int64_t total_logits = 0;
  int64_t merge_concat_channels(int stage) const { return 2 * merged[static_cast<size_t>(stage)].channels; }
};

ShapePlan infer_shape_plan(const ModelConfig& cfg, const Taxonomy& tax);

struct HeadOutput {
  Tensor logits;  // (B, L); multitask logits scattered to taxonomy label positions
  std::vector<Tensor> blocks;  // multitask: six (B, width_c) blocks in category order
};

// The network: HATNet (parallel 2D/3D branches + merge-reduce), the plain
// 3D-ResNet baseline, or either branch alone; global average pool; single or
// per-category affine heads.
class VideoNet {
public:
  VideoNet(const ModelConfig& cfg, const Taxonomy& tax);

  void init_params(uint64_t seed);
  ParamRefs params();          // stable registration order, names assigned
  void zero_grads();
  int64_t param_count();

  HeadOutput forward(const Tensor& clips);
  // dlogits: (B, L) gradient w.r.t. the (scattered) logits.
  void backward(const Tensor& dlogits);

  Tensor forward_features(const Tensor& clips);  // (B, feature_dim), post-pool pre-head

  const ModelConfig& config() const { return cfg_; }
  const ShapePlan& plan() const { return plan_; }
  const std::array<std::vector<int>, kNumCategories>& category_ids() const { return category_ids_; }

private:
  Tensor forward_trunk(const Tensor& clips);
  Tensor backward_trunk_input(const Tensor& dpooled);

  ModelConfig cfg_;
  ShapePlan plan_;
  std::array<std::vector<int>, kNumCategories> category_ids_;

  bool has_2d_ = false, has_3d_ = false, has_merge_ = false;
  Conv3d stem2d_conv_, stem3d_conv_;
  GroupNorm stem2d_norm_, stem3d_norm_;
  ReLU stem2d_relu_, stem3d_relu_;
  std::vector<Stage> stages2d_, stages3d_;
  std::vector<MergeReduce> merges_;
  GlobalAvgPool pool_;
  Linear head_single_;
  std::vector<Linear> head_multi_;  // six, in category order (width may be 0)
};

// Gathers logits (B, L) from per-category blocks / scatters gradients back.
Tensor scatter_blocks(const std::vector<Tensor>& blocks,
                      const std::array<std::vector<int>, kNumCategories>& ids, int64_t total);
std::vector<Tensor> gather_blocks(const Tensor& full,
                                  const std::array<std::vector<int>, kNumCategories>& ids);

}  // namespace holivid
