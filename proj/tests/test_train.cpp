#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include <nlohmann/json.hpp>

#include "holivid/error.hpp"
#include "holivid/loss.hpp"
#include "holivid/train.hpp"
#include "test_util.hpp"

using namespace holivid;

namespace {

// Small corpus + model that train in well under a second per epoch.
SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.n_train = 12;
  spec.n_val = 6;
  spec.n_test = 4;
  spec.frames = 8;
  spec.height = 32;
  spec.width = 32;
  spec.static_labels = 3;
  spec.dynamic_labels = 2;
  spec.labels_min = 1;
  spec.labels_max = 2;
  spec.noise_std = 0.01;
  spec.seed = 5;
  return spec;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.mode = Mode::Branch3dOnly;
  cfg.frames = 8;
  cfg.input_size = 32;
  cfg.stage_channels = {4, 4, 8, 8};
  return cfg;
}

TrainConfig tiny_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.lr = 0.02;
  t.seed = 3;
  return t;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<size_t>(a.size())) == 0;
}

Param make_param(std::vector<int64_t> shape) {
  Param p;
  p.init_shape(std::move(shape));
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("train");

TEST_CASE("sgd: classical momentum hand case") {
  Param p = make_param({1});
  p.value[0] = 1.0;
  ParamRefs refs{&p};
  Sgd opt(0.9, 0.0);
  p.grad[0] = 1.0;
  opt.step(refs, 0.1);
  // v1 = 1, w = 1 - 0.1*1 = 0.9
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-15));
  p.grad[0] = 1.0;
  opt.step(refs, 0.1);
  // v2 = 0.9*1 + 1 = 1.9, w = 0.9 - 0.19 = 0.71
  CHECK(p.value[0] == doctest::Approx(0.71).epsilon(1e-15));
}

TEST_CASE("sgd: weight decay contributes wd*w to the gradient") {
  Param p = make_param({1});
  p.value[0] = 2.0;
  ParamRefs refs{&p};
  Sgd opt(0.0, 0.1);
  p.grad[0] = 0.0;
  opt.step(refs, 1.0);
  // v = 0.1*2 = 0.2, w = 2 - 0.2 = 1.8
  CHECK(p.value[0] == doctest::Approx(1.8).epsilon(1e-15));
}

TEST_CASE("sgd: lr 0 is a no-op on the weights") {
  Param p = make_param({3});
  for (int64_t i = 0; i < 3; ++i) {
    p.value[i] = 0.5 * static_cast<double>(i);
    p.grad[i] = 7.0;
  }
  Tensor before = p.value;
  ParamRefs refs{&p};
  Sgd opt(0.9, 0.01);
  opt.step(refs, 0.0);
  CHECK(tensors_equal(before, p.value));
}

TEST_CASE("default lr schedule for 10 epochs steps at 5 and 8") {
  TrainConfig t = tiny_train(10);
  t.lr = 1.0;
  CHECK(resolved_lr_steps(t) == std::vector<int>{5, 8});
  CHECK(lr_for_epoch(t, 1) == doctest::Approx(1.0));
  CHECK(lr_for_epoch(t, 4) == doctest::Approx(1.0));
  CHECK(lr_for_epoch(t, 5) == doctest::Approx(0.1));
  CHECK(lr_for_epoch(t, 7) == doctest::Approx(0.1));
  CHECK(lr_for_epoch(t, 8) == doctest::Approx(0.01));
  CHECK(lr_for_epoch(t, 10) == doctest::Approx(0.01));

  t.lr_steps = {2};
  t.lr_decay = 0.5;
  CHECK(lr_for_epoch(t, 1) == doctest::Approx(1.0));
  CHECK(lr_for_epoch(t, 2) == doctest::Approx(0.5));
}

TEST_CASE("train config validation") {
  TrainConfig t = tiny_train(1);
  CHECK_NOTHROW(validate_train_config(t));
  t.epochs = -1;
  CHECK_THROWS_AS(validate_train_config(t), ValidationError);
  t = tiny_train(1);
  t.momentum = 1.0;
  CHECK_THROWS_AS(validate_train_config(t), ValidationError);
  t = tiny_train(1);
  t.lr = 0.0;
  CHECK_THROWS_AS(validate_train_config(t), ValidationError);
  t = tiny_train(1);
  t.lr_decay = 0.0;
  CHECK_THROWS_AS(validate_train_config(t), ValidationError);
  t = tiny_train(1);
  t.lr_steps = {0};
  CHECK_THROWS_AS(validate_train_config(t), ValidationError);
  t = tiny_train(1);
  t.loss_weights[2] = -1.0;
  CHECK_THROWS_AS(validate_train_config(t), ValidationError);
  t = tiny_train(1);
  t.active_categories.fill(false);
  CHECK_THROWS_AS(validate_train_config(t), ValidationError);
  t = tiny_train(1);
  t.stop_at_train_map = 1.5;
  CHECK_THROWS_AS(validate_train_config(t), ValidationError);
}

TEST_CASE("history jsonl carries the exact key set with nulls when undefined") {
  EpochRecord a;
  a.epoch = 1;
  a.train_loss = 0.5;
  a.val_loss = 0.25;
  a.val_map = 0.75;
  a.val_map_per_category[0] = 0.5;  // scene defined, rest null
  EpochRecord b;
  b.epoch = 2;
  b.train_loss = 0.4;

  std::string text = history_to_jsonl({a, b});
  std::istringstream in(text);
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
  REQUIRE(rows.size() == 2);

  const std::set<std::string> want_keys = {"epoch", "train_loss", "val_loss", "val_map",
                                           "val_map_per_category"};
  for (const auto& row : rows) {
    std::set<std::string> keys;
    for (auto it = row.begin(); it != row.end(); ++it) keys.insert(it.key());
    CHECK(keys == want_keys);
    std::set<std::string> cats;
    for (auto it = row.at("val_map_per_category").begin();
         it != row.at("val_map_per_category").end(); ++it)
      cats.insert(it.key());
    CHECK(cats == std::set<std::string>{"scene", "object", "action", "event", "attribute",
                                        "concept"});
  }
  CHECK(rows[0].at("epoch") == 1);
  CHECK(rows[0].at("val_map").get<double>() == doctest::Approx(0.75));
  CHECK(rows[0].at("val_map_per_category").at("scene").get<double>() == doctest::Approx(0.5));
  CHECK(rows[0].at("val_map_per_category").at("object").is_null());
  CHECK(rows[1].at("val_map").is_null());
}

TEST_CASE("zero epochs yield an initialized checkpoint and empty history") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  TrainResult r = train(tiny_model(), tiny_train(0), spec, corpus.taxonomy, corpus.manifest);
  CHECK(r.history.empty());
  CHECK(r.steps == 0);
  CHECK(r.checkpoint.step == 0);
  CHECK(r.checkpoint.taxonomy_sha256 == corpus.taxonomy.fingerprint());
  CHECK(!r.checkpoint.names.empty());

  // the snapshot equals a fresh init from the same train seed
  VideoNet net(tiny_model(), corpus.taxonomy);
  net.init_params(derive_seed(3, "init"));
  for (Param* p : net.params()) {
    const Tensor* t = r.checkpoint.find(p->name);
    REQUIRE(t != nullptr);
    CHECK(tensors_equal(*t, p->value));
  }
}

TEST_CASE("two epochs of training reduce the loss and are deterministic") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  TrainConfig t = tiny_train(2);
  TrainResult a = train(tiny_model(), t, spec, corpus.taxonomy, corpus.manifest);
  REQUIRE(a.history.size() == 2);
  CHECK(a.history[1].train_loss < a.history[0].train_loss);
  CHECK(a.steps == 2 * 3);  // 12 records / batch 4 = 3 steps per epoch
  CHECK(a.history[0].val_map.has_value());

  TrainResult b = train(tiny_model(), t, spec, corpus.taxonomy, corpus.manifest);
  REQUIRE(b.history.size() == a.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  REQUIRE(a.checkpoint.names == b.checkpoint.names);
  for (size_t i = 0; i < a.checkpoint.tensors.size(); ++i) {
    CHECK(tensors_equal(a.checkpoint.tensors[i], b.checkpoint.tensors[i]));
  }

  // a different seed changes the trajectory
  TrainConfig t2 = t;
  t2.seed = 4;
  TrainResult c = train(tiny_model(), t2, spec, corpus.taxonomy, corpus.manifest);
  CHECK(c.history[0].train_loss != a.history[0].train_loss);
}

TEST_CASE("an absurd learning rate raises DivergenceError with context") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  TrainConfig t = tiny_train(3);
  t.lr = 1e160;
  try {
    train(tiny_model(), t, spec, corpus.taxonomy, corpus.manifest);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.epoch >= 1);
    CHECK(e.batch >= 0);
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("stop_at_train_map ends the run early") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  TrainConfig t = tiny_train(5);
  t.stop_at_train_map = 1e-6;  // any defined mAP exceeds this
  TrainResult r = train(tiny_model(), t, spec, corpus.taxonomy, corpus.manifest);
  CHECK(r.history.size() == 1);
}

TEST_CASE("head_mode declaration must match the model") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  TrainConfig t = tiny_train(1);
  t.head_mode = HeadMode::MultiTask;  // model is single-head
  CHECK_THROWS_AS(train(tiny_model(), t, spec, corpus.taxonomy, corpus.manifest), ValidationError);
}

TEST_CASE("epoch callback fires once per epoch in order") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  std::vector<int> seen;
  train(tiny_model(), tiny_train(2), spec, corpus.taxonomy, corpus.manifest,
        [&](const EpochRecord& rec) { seen.push_back(rec.epoch); });
  CHECK(seen == std::vector<int>{1, 2});
}

TEST_CASE("predict returns sigmoid scores in record order") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  VideoNet net(tiny_model(), corpus.taxonomy);
  net.init_params(2);
  std::vector<const AnnotationRecord*> recs;
  for (const auto& r : corpus.manifest.records) {
    if (r.split == Split::Val) recs.push_back(&r);
  }
  ClipCache cache;
  Tensor s1 = predict(net, spec, corpus.taxonomy, recs, 4, &cache);
  REQUIRE(s1.shape() == std::vector<int64_t>{static_cast<int64_t>(recs.size()),
                                             static_cast<int64_t>(corpus.taxonomy.size())});
  for (int64_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i] > 0.0);
    CHECK(s1[i] < 1.0);
  }
  // batch size must not affect the scores
  Tensor s2 = predict(net, spec, corpus.taxonomy, recs, 1, nullptr);
  for (int64_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == doctest::Approx(s2[i]).epsilon(1e-12));
}

TEST_CASE("finetune transfers the trunk bitwise and reinitializes the heads") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  TrainConfig t = tiny_train(1);
  TrainResult pre = train(tiny_model(), t, spec, corpus.taxonomy, corpus.manifest);

  // same architecture, different label space (one extra dynamic label)
  SyntheticSpec spec2 = tiny_spec();
  spec2.dynamic_labels = 3;
  spec2.seed = 6;
  SyntheticCorpus corpus2 = generate_synthetic(spec2);

  TrainConfig t0 = tiny_train(0);  // no updates: snapshot shows the transfer itself
  FinetuneReport report;
  TrainResult ft = finetune(pre.checkpoint, tiny_model(), t0, spec2, corpus2.taxonomy,
                            corpus2.manifest, &report);
  CHECK(!report.transferred.empty());
  CHECK(!report.reinitialized.empty());
  for (const auto& name : report.reinitialized) CHECK(name.rfind("head.", 0) == 0);

  for (const auto& name : report.transferred) {
    const Tensor* src = pre.checkpoint.find(name);
    const Tensor* dst = ft.checkpoint.find(name);
    REQUIRE(src != nullptr);
    REQUIRE(dst != nullptr);
    CHECK(tensors_equal(*src, *dst));
  }
  // heads are fresh: shapes differ (label space grew), so just check presence
  const Tensor* head = ft.checkpoint.find("head.fc.weight");
  REQUIRE(head != nullptr);
  CHECK(head->dim(0) == corpus2.taxonomy.size());
}

TEST_CASE("finetune rejects a checkpoint with an incompatible trunk") {
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  ModelConfig narrow = tiny_model();
  TrainResult pre = train(narrow, tiny_train(0), spec, corpus.taxonomy, corpus.manifest);

  ModelConfig wide = tiny_model();
  wide.stage_channels = {8, 8, 8, 8};  // stage1/2 widths differ from (4, 4, ...)
  try {
    finetune(pre.checkpoint, wide, tiny_train(0), spec, corpus.taxonomy, corpus.manifest);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    CHECK(msg.find("trunk shape mismatch") != std::string::npos);
    CHECK(msg.find("stem3d.conv.weight") != std::string::npos);
  }
}

TEST_CASE("inactive categories stay out of the normalizer") {
  // two active heads with weights 1 and 2 -> value = (1*L_a + 2*L_b) / 3
  SyntheticSpec spec = tiny_spec();
  SyntheticCorpus corpus = generate_synthetic(spec);
  VideoNet net(tiny_model(), corpus.taxonomy);
  net.init_params(8);

  std::vector<const AnnotationRecord*> recs;
  for (const auto& r : corpus.manifest.records)
    if (r.split == Split::Train) recs.push_back(&r);
  std::vector<int> idx = {0, 1, 2, 3};
  Batch batch = assemble_batch(spec, corpus.taxonomy, recs, idx, nullptr);
  HeadOutput head = net.forward(batch.clips);

  std::array<bool, kNumCategories> active;
  active.fill(false);
  active[static_cast<size_t>(Category::Scene)] = true;
  active[static_cast<size_t>(Category::Action)] = true;
  std::array<double, kNumCategories> weights{};
  weights[static_cast<size_t>(Category::Scene)] = 1.0;
  weights[static_cast<size_t>(Category::Action)] = 2.0;

  Tensor mask = category_mask(batch.mask, net.category_ids(), active);
  MultiTaskResult mt =
      multi_task_loss(head.logits, batch.targets, mask, net.category_ids(), weights);
  double want = (1.0 * mt.per_head[static_cast<size_t>(Category::Scene)] +
                 2.0 * mt.per_head[static_cast<size_t>(Category::Action)]) /
                3.0;
  CHECK(mt.value == doctest::Approx(want).epsilon(1e-12));
}

TEST_SUITE_END();
