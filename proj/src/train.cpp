#include "holivid/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "holivid/error.hpp"
#include "holivid/loss.hpp"
#include "holivid/rng.hpp"

namespace holivid {

namespace {

using json = nlohmann::json;

std::vector<const AnnotationRecord*> split_ptrs(const Manifest& manifest, Split split) {
  std::vector<const AnnotationRecord*> out;
  for (const AnnotationRecord& r : manifest.records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

std::array<double, kNumCategories> effective_weights(const TrainConfig& cfg) {
  std::array<double, kNumCategories> w = cfg.loss_weights;
  for (int c = 0; c < kNumCategories; ++c) {
    if (!cfg.active_categories[static_cast<size_t>(c)]) w[static_cast<size_t>(c)] = 0.0;
  }
  return w;
}

struct EvalOutcome {
  double loss = 0.0;
  MapReport report;
};

// Loss + mAP over a fixed record list (identity batch order, no grads).
EvalOutcome evaluate(VideoNet& net, const SyntheticSpec& spec, const Taxonomy& tax,
                     const std::vector<const AnnotationRecord*>& records, const TrainConfig& tcfg,
                     ClipCache* cache) {
  EvalOutcome out;
  const auto weights = effective_weights(tcfg);
  const int64_t l = tax.size();
  Tensor scores({static_cast<int64_t>(records.size()), l});
  double loss_sum = 0.0;
  int64_t seen = 0;
  for (const auto& idx : plan_batches(static_cast<int>(records.size()), tcfg.batch_size, std::nullopt)) {
    Batch batch = assemble_batch(spec, tax, records, idx, cache);
    HeadOutput head = net.forward(batch.clips);
    Tensor mask = category_mask(batch.mask, net.category_ids(), tcfg.active_categories);
    MultiTaskResult mt = multi_task_loss(head.logits, batch.targets, mask, net.category_ids(), weights);
    const int64_t b = batch.clips.dim(0);
    loss_sum += mt.value * static_cast<double>(b);
    seen += b;
    for (size_t k = 0; k < idx.size(); ++k) {
      const int64_t row = static_cast<int64_t>(idx[static_cast<size_t>(k)]);
      for (int64_t j = 0; j < l; ++j)
        scores[row * l + j] = sigmoid(head.logits[static_cast<int64_t>(k) * l + j]);
    }
  }
  out.loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
  out.report = map_report(scores, relevance_matrix(records, static_cast<int>(l)), tax);
  return out;
}

TrainResult run_training(VideoNet& net, const TrainConfig& tcfg, const SyntheticSpec& spec,
                         const Taxonomy& tax, const Manifest& manifest,
                         const EpochCallback& on_epoch) {
  auto train_recs = split_ptrs(manifest, Split::Train);
  auto val_recs = split_ptrs(manifest, Split::Val);
  if (train_recs.empty()) throw ValidationError("train: no records in the train split");

  const auto weights = effective_weights(tcfg);
  ClipCache cache;
  Sgd opt(tcfg.momentum, tcfg.weight_decay);
  ParamRefs params = net.params();

  TrainResult result;
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const double lr = lr_for_epoch(tcfg, epoch);
    const auto plan = plan_batches(static_cast<int>(train_recs.size()), tcfg.batch_size,
                                   derive_seed(tcfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
    double loss_sum = 0.0;
    int64_t seen = 0;
    for (size_t bi = 0; bi < plan.size(); ++bi) {
      Batch batch = assemble_batch(spec, tax, train_recs, plan[bi], &cache);
      net.zero_grads();
      HeadOutput head = net.forward(batch.clips);
      Tensor mask = category_mask(batch.mask, net.category_ids(), tcfg.active_categories);
      MultiTaskResult mt =
          multi_task_loss(head.logits, batch.targets, mask, net.category_ids(), weights);
      if (!std::isfinite(mt.value) || !all_finite(head.logits)) {
        throw DivergenceError("training diverged: non-finite loss or logits", epoch,
                              static_cast<int>(bi), max_abs(head.logits));
      }
      net.backward(mt.dlogits);
      opt.step(params, lr);
      // The update itself can overflow long before the next forward pass sees
      // a non-finite logit; catch it here so the failure points at the step
      // that produced it rather than at a later evaluation.
      for (const Param* p : params) {
        if (!all_finite(p->value)) {
          throw DivergenceError("training diverged: non-finite parameter after update", epoch,
                                static_cast<int>(bi), max_abs(head.logits));
        }
      }
      ++result.steps;
      const int64_t b = batch.clips.dim(0);
      loss_sum += mt.value * static_cast<double>(b);
      seen += b;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
    if (!val_recs.empty()) {
      EvalOutcome val = evaluate(net, spec, tax, val_recs, tcfg, &cache);
      rec.val_loss = val.loss;
      rec.val_map = val.report.overall;
      rec.val_map_per_category = val.report.per_category;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (tcfg.stop_at_train_map) {
      EvalOutcome tr = evaluate(net, spec, tax, train_recs, tcfg, &cache);
      if (tr.report.overall && *tr.report.overall >= *tcfg.stop_at_train_map) break;
    }
  }

  result.checkpoint = snapshot(net, tax.fingerprint(), result.steps);
  return result;
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ValidationError("train config: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr))
    throw ValidationError("train config: lr must be positive and finite");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ValidationError("train config: momentum must lie in [0, 1)");
  if (cfg.weight_decay < 0.0 || !std::isfinite(cfg.weight_decay))
    throw ValidationError("train config: weight_decay must be >= 0");
  if (!(cfg.lr_decay > 0.0) || cfg.lr_decay > 1.0)
    throw ValidationError("train config: lr_decay must lie in (0, 1]");
  for (int s : cfg.lr_steps) {
    if (s < 1) throw ValidationError("train config: lr_steps entries must be >= 1");
  }
  for (double w : cfg.loss_weights) {
    if (w < 0.0 || !std::isfinite(w))
      throw ValidationError("train config: loss_weights must be finite and >= 0");
  }
  if (cfg.stop_at_train_map && !(*cfg.stop_at_train_map > 0.0 && *cfg.stop_at_train_map <= 1.0))
    throw ValidationError("train config: stop_at_train_map must lie in (0, 1]");
  bool any_active = false;
  for (bool a : cfg.active_categories) any_active = any_active || a;
  if (!any_active) throw ValidationError("train config: active_categories must be nonempty");
}

std::vector<int> resolved_lr_steps(const TrainConfig& cfg) {
  std::vector<int> steps = cfg.lr_steps;
  if (steps.empty()) {
    steps = {(cfg.epochs + 1) / 2, (3 * cfg.epochs + 3) / 4};
  }
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

double lr_for_epoch(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int s : resolved_lr_steps(cfg)) {
    if (epoch >= s) lr *= cfg.lr_decay;
  }
  return lr;
}

std::string history_to_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const EpochRecord& rec : history) {
    json j;
    j["epoch"] = rec.epoch;
    j["train_loss"] = rec.train_loss;
    j["val_loss"] = rec.val_loss;
    j["val_map"] = rec.val_map ? json(*rec.val_map) : json(nullptr);
    json per = json::object();
    for (int c = 0; c < kNumCategories; ++c) {
      const auto& v = rec.val_map_per_category[static_cast<size_t>(c)];
      per[category_name(static_cast<Category>(c))] = v ? json(*v) : json(nullptr);
    }
    j["val_map_per_category"] = per;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void Sgd::step(const ParamRefs& params, double lr) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const Param* p : params) velocity_.emplace_back(p->value.shape());
  }
  if (velocity_.size() != params.size())
    throw ValidationError("sgd: parameter list changed between steps");
  for (size_t i = 0; i < params.size(); ++i) {
    Param* p = params[i];
    Tensor& v = velocity_[i];
    double* vd = v.data();
    double* w = p->value.data();
    const double* g = p->grad.data();
    const int64_t n = p->value.size();
    for (int64_t k = 0; k < n; ++k) {
      vd[k] = momentum_ * vd[k] + g[k] + weight_decay_ * w[k];
      w[k] -= lr * vd[k];
    }
  }
}

TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg, const SyntheticSpec& spec,
                  const Taxonomy& tax, const Manifest& manifest, const EpochCallback& on_epoch) {
  validate_model_config(mcfg);
  validate_train_config(tcfg);
  if (tcfg.head_mode && *tcfg.head_mode != mcfg.head_mode)
    throw ValidationError("train config: head_mode disagrees with the model config");
  VideoNet net(mcfg, tax);
  net.init_params(derive_seed(tcfg.seed, "init"));
  return run_training(net, tcfg, spec, tax, manifest, on_epoch);
}

Tensor predict(VideoNet& net, const SyntheticSpec& spec, const Taxonomy& tax,
               const std::vector<const AnnotationRecord*>& records, int batch_size,
               ClipCache* cache) {
  const int64_t l = tax.size();
  Tensor scores({static_cast<int64_t>(records.size()), l});
  for (const auto& idx : plan_batches(static_cast<int>(records.size()), batch_size, std::nullopt)) {
    Batch batch = assemble_batch(spec, tax, records, idx, cache);
    HeadOutput head = net.forward(batch.clips);
    for (size_t k = 0; k < idx.size(); ++k) {
      const int64_t row = static_cast<int64_t>(idx[k]);
      for (int64_t j = 0; j < l; ++j)
        scores[row * l + j] = sigmoid(head.logits[static_cast<int64_t>(k) * l + j]);
    }
  }
  return scores;
}

TrainResult finetune(const Checkpoint& source, const ModelConfig& mcfg, const TrainConfig& tcfg,
                     const SyntheticSpec& spec, const Taxonomy& tax, const Manifest& manifest,
                     FinetuneReport* report, const EpochCallback& on_epoch) {
  validate_model_config(mcfg);
  validate_train_config(tcfg);
  if (tcfg.head_mode && *tcfg.head_mode != mcfg.head_mode)
    throw ValidationError("train config: head_mode disagrees with the model config");
  VideoNet net(mcfg, tax);
  net.init_params(derive_seed(tcfg.seed, "init"));
  FinetuneReport local;
  std::vector<std::string> incompatible;
  for (Param* p : net.params()) {
    if (p->name.rfind("head.", 0) == 0) {
      local.reinitialized.push_back(p->name);
      continue;
    }
    const Tensor* src = source.find(p->name);
    if (src == nullptr || !src->same_shape(p->value)) {
      incompatible.push_back(p->name);
      continue;
    }
    p->value = *src;
    local.transferred.push_back(p->name);
  }
  if (!incompatible.empty()) {
    std::string msg = "finetune: trunk shape mismatch for";
    for (const std::string& name : incompatible) msg += " '" + name + "'";
    throw ValidationError(msg);
  }
  if (report != nullptr) *report = local;
  return run_training(net, tcfg, spec, tax, manifest, on_epoch);
}

}  // namespace holivid
