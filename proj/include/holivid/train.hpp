#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "holivid/batching.hpp"
#include "holivid/checkpoint.hpp"
#include "holivid/metrics.hpp"
#include "holivid/model.hpp"
#include "holivid/synthetic.hpp"

namespace holivid {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // 1-based epochs at which lr is multiplied by lr_decay (effective from that
  // epoch on).  Empty means the default schedule {ceil(E/2), ceil(3E/4)}.
  std::vector<int> lr_steps;
  double lr_decay = 0.1;
  uint64_t seed = 1;
  std::array<bool, kNumCategories> active_categories = {true, true, true, true, true, true};
  std::array<double, kNumCategories> loss_weights = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  // Optional redundant declaration; when set it must match the model config.
  std::optional<HeadMode> head_mode;
  // Early stop once the full-train-split mAP reaches this value.
  std::optional<double> stop_at_train_map;
};

void validate_train_config(const TrainConfig& cfg);
std::vector<int> resolved_lr_steps(const TrainConfig& cfg);
double lr_for_epoch(const TrainConfig& cfg, int epoch);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_map;
  std::array<std::optional<double>, kNumCategories> val_map_per_category;
};

std::string history_to_jsonl(const std::vector<EpochRecord>& history);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  int64_t steps = 0;  // optimizer steps taken
};

// SGD with classical momentum; L2 weight decay is added to the gradient
// before the momentum update (v = m*v + g + wd*w; w -= lr*v).
class Sgd {
public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(const ParamRefs& params, double lr);

private:
  double momentum_, weight_decay_;
  std::vector<Tensor> velocity_;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg, const SyntheticSpec& spec,
                  const Taxonomy& tax, const Manifest& manifest,
                  const EpochCallback& on_epoch = nullptr);

// Sigmoid scores (N, L) for `records`, batched in order.
Tensor predict(VideoNet& net, const SyntheticSpec& spec, const Taxonomy& tax,
               const std::vector<const AnnotationRecord*>& records, int batch_size,
                ClipCache* cache);

struct FinetuneReport {
  std::vector<std::string> transferred;    // trunk parameters copied from the source
  std::vector<std::string> reinitialized;  // head parameters (head.*)
};

// Transfers trunk weights from `source`, reinitializes the heads for the new
// label space, then trains as usual.  A trunk parameter that is missing from
// the source or carries a different shape is an error naming every
// incompatible parameter.
TrainResult finetune(const Checkpoint& source, const ModelConfig& mcfg, const TrainConfig& tcfg,
                     const SyntheticSpec& spec, const Taxonomy& tax, const Manifest& manifest,
                     FinetuneReport* report = nullptr, const EpochCallback& on_epoch = nullptr);

}  // namespace holivid
