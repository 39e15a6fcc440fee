// holivid — taxonomy tooling, synthetic data, training, evaluation, feature
// extraction and clustering behind one binary.
//
// Exit codes: 0 success, 1 validation error (bad flags, bad files, bad
// configs), 2 runtime failure (divergence, I/O breakage).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "holivid/batching.hpp"
#include "holivid/checkpoint.hpp"
#include "holivid/error.hpp"
#include "holivid/features.hpp"
#include "holivid/kmeans.hpp"
#include "holivid/manifest.hpp"
#include "holivid/metrics.hpp"
#include "holivid/model.hpp"
#include "holivid/runconfig.hpp"
#include "holivid/synthetic.hpp"
#include "holivid/taxonomy.hpp"
#include "holivid/tensor_io.hpp"
#include "holivid/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace holivid;

namespace {

bool deterministic_mode() {
  const char* v = std::getenv("HOLIVID_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot open '" + path + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    if (text.empty() || text.back() != '\n') std::cout << '\n';
  } else {
    write_text_file(out_path, text);
  }
}

struct DataBundle {
  SyntheticSpec spec;
  Taxonomy taxonomy;
  Manifest manifest;
};

DataBundle load_data_dir(const std::string& dir) {
  DataBundle b;
  b.spec = load_spec((fs::path(dir) / "spec.json").string());
  b.taxonomy = load_taxonomy((fs::path(dir) / "taxonomy.csv").string());
  b.manifest = load_manifest((fs::path(dir) / "manifest.jsonl").string());
  check_label_range(b.manifest, b.taxonomy.size());
  return b;
}

DataBundle resolve_data(const DataConfig& cfg) {
  if (cfg.dir) return load_data_dir(*cfg.dir);
  DataBundle b;
  b.spec = *cfg.synthetic;
  SyntheticCorpus corpus = generate_synthetic(b.spec);
  b.taxonomy = std::move(corpus.taxonomy);
  b.manifest = std::move(corpus.manifest);
  return b;
}

std::vector<const AnnotationRecord*> records_of_split(const Manifest& m, const std::string& split) {
  if (split == "all") {
    std::vector<const AnnotationRecord*> out;
    for (const auto& r : m.records) out.push_back(&r);
    return out;
  }
  auto s = split_from_name(split);
  if (!s) throw ValidationError("unknown split '" + split + "'");
  std::vector<const AnnotationRecord*> out;
  for (const auto& r : m.records) {
    if (r.split == *s) out.push_back(&r);
  }
  return out;
}

json stats_to_json(const TaxonomyStats& stats, const std::map<std::string, double>& coverage) {
  json per = json::object();
  for (int c = 0; c < kNumCategories; ++c) {
    const CategoryStats& cs = stats.per_category[static_cast<size_t>(c)];
    json e;
    e["labels"] = cs.label_count;
    e["annotations"] = cs.annotation_count;
    e["videos"] = cs.video_count;
    e["annotations_per_label"] = cs.annotations_per_label;
    per[category_name(static_cast<Category>(c))] = e;
  }
  json j;
  j["per_category"] = per;
  j["total_labels"] = stats.total_labels;
  j["total_annotations"] = stats.total_annotations;
  j["total_videos"] = stats.total_videos;
  j["annotations_per_label"] = stats.annotations_per_label;
  j["coverage"] = coverage;
  return j;
}

// ---- subcommand bodies ----------------------------------------------------

int cmd_taxonomy_stats(const std::string& taxonomy_path, const std::string& manifest_path,
                       const std::string& out_path) {
  Taxonomy tax = load_taxonomy(taxonomy_path);
  Manifest manifest = load_manifest(manifest_path);
  check_label_range(manifest, tax.size());
  TaxonomyStats stats = category_stats(tax, manifest);
  auto coverage = coverage_partition(tax, manifest);
  emit(stats_to_json(stats, coverage).dump(2) + "\n", out_path);
  return 0;
}

int cmd_taxonomy_prune(const std::string& taxonomy_path, const std::string& manifest_path,
                       int min_samples, const std::string& out_dir) {
  Taxonomy tax = load_taxonomy(taxonomy_path);
  Manifest manifest = load_manifest(manifest_path);
  check_label_range(manifest, tax.size());
  PruneResult pruned = prune_by_min_samples(tax, manifest, min_samples);
  fs::create_directories(out_dir);
  save_taxonomy((fs::path(out_dir) / "taxonomy.csv").string(), pruned.taxonomy);
  write_text_file((fs::path(out_dir) / "manifest.jsonl").string(),
                  manifest_to_jsonl(pruned.manifest));
  json report;
  report["id_map"] = pruned.id_map;
  report["kept_labels"] = pruned.taxonomy.size();
  report["removed_labels"] = pruned.removed_labels;
  report["removed_records"] = pruned.removed_records;
  write_text_file((fs::path(out_dir) / "prune_report.json").string(), report.dump(2) + "\n");
  std::cerr << "pruned " << pruned.removed_labels << " labels, dropped " << pruned.removed_records
            << " records; kept " << pruned.taxonomy.size() << " labels\n";
  return 0;
}

int cmd_dataset_synth(const SyntheticSpec& spec, const std::string& out_dir) {
  validate_spec(spec);
  SyntheticCorpus corpus = generate_synthetic(spec);
  fs::create_directories(out_dir);
  save_spec((fs::path(out_dir) / "spec.json").string(), spec);
  save_taxonomy((fs::path(out_dir) / "taxonomy.csv").string(), corpus.taxonomy);
  write_text_file((fs::path(out_dir) / "manifest.jsonl").string(),
                  manifest_to_jsonl(corpus.manifest));
  std::cerr << "wrote " << corpus.manifest.records.size() << " records, "
            << corpus.taxonomy.size() << " labels to " << out_dir << "\n";
  return 0;
}

int cmd_dataset_export(const std::string& data_dir, const std::string& split,
                       const std::string& out_dir) {
  DataBundle data = load_data_dir(data_dir);
  auto records = records_of_split(data.manifest, split);
  fs::create_directories(out_dir);
  for (const AnnotationRecord* rec : records) {
    Tensor clip = render_clip(data.spec, *rec);
    write_flat_binary((fs::path(out_dir) / (rec->video_id + ".bin")).string(), clip);
  }
  std::cerr << "exported " << records.size() << " clips to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& finetune_from) {
  RunConfig cfg = load_run_config(config_path);
  DataBundle data = resolve_data(cfg.data);
  fs::create_directories(cfg.out_dir);

  const bool quiet_timing = deterministic_mode();
  auto t0 = std::chrono::steady_clock::now();
  auto on_epoch = [&](const EpochRecord& rec) {
    std::ostringstream line;
    line << "epoch " << rec.epoch << "/" << cfg.train.epochs << "  train_loss " << rec.train_loss
         << "  val_loss " << rec.val_loss << "  val_map ";
    if (rec.val_map)
      line << *rec.val_map;
    else
      line << "n/a";
    if (!quiet_timing) {
      auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      line << "  (" << secs << "s)";
    }
    std::cerr << line.str() << "\n";
  };

  TrainResult result;
  if (finetune_from.empty()) {
    result = train(cfg.model, cfg.train, data.spec, data.taxonomy, data.manifest, on_epoch);
  } else {
    Checkpoint source = load_checkpoint(finetune_from);
    FinetuneReport report;
    result = finetune(source, cfg.model, cfg.train, data.spec, data.taxonomy, data.manifest,
                      &report, on_epoch);
    json rj;
    rj["reinitialized"] = report.reinitialized;
    rj["transferred"] = report.transferred;
    write_text_file((fs::path(cfg.out_dir) / "finetune_report.json").string(), rj.dump(2) + "\n");
    std::cerr << "transferred " << report.transferred.size() << " tensors, reinitialized "
              << report.reinitialized.size() << "\n";
  }

  save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.ckpt").string(), result.checkpoint);
  write_text_file((fs::path(cfg.out_dir) / "history.jsonl").string(),
                  history_to_jsonl(result.history));

  // Val-split predictions from the final weights, for `eval`.
  VideoNet net(result.checkpoint.config, data.taxonomy);
  net.init_params(0);
  restore(net, result.checkpoint);
  auto val_recs = records_of_split(data.manifest, "val");
  ClipCache cache;
  Tensor scores = predict(net, data.spec, data.taxonomy, val_recs, cfg.train.batch_size, &cache);
  std::vector<std::string> ids;
  for (const auto* r : val_recs) ids.push_back(r->video_id);
  save_predictions((fs::path(cfg.out_dir) / "predictions_val.jsonl").string(), ids, scores);
  return 0;
}

int cmd_eval(const std::string& predictions_path, const std::string& manifest_path,
             const std::string& taxonomy_path, const std::string& out_path) {
  Taxonomy tax = load_taxonomy(taxonomy_path);
  Manifest manifest = load_manifest(manifest_path);
  check_label_range(manifest, tax.size());
  Predictions preds = load_predictions(predictions_path);
  if (preds.scores.size() > 0 && preds.scores.dim(1) != tax.size())
    throw ValidationError("predictions have " + std::to_string(preds.scores.dim(1)) +
                          " scores per row, taxonomy has " + std::to_string(tax.size()) +
                          " labels");

  std::map<std::string, const AnnotationRecord*> by_id;
  for (const auto& r : manifest.records) by_id[r.video_id] = &r;
  std::vector<const AnnotationRecord*> records;
  for (const std::string& id : preds.video_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw ValidationError("predictions reference unknown video_id '" + id + "'");
    records.push_back(it->second);
  }
  MapReport report = map_report(preds.scores, relevance_matrix(records, tax.size()), tax);
  emit(map_report_to_json(report), out_path);
  return 0;
}

int cmd_features(const std::string& checkpoint_path, const std::string& data_dir,
                 const std::string& split, int batch_size, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  DataBundle data = load_data_dir(data_dir);
  auto records = records_of_split(data.manifest, split);
  if (records.empty()) throw ValidationError("no records in split '" + split + "'");
  FeatureMatrix fm = extract_features(ckpt, data.spec, data.taxonomy, records, batch_size);
  for (const std::string& w : fm.warnings) std::cerr << "warning: " << w << "\n";
  write_flat_binary(out_path, fm.features.reshaped({fm.features.dim(0), fm.features.dim(1), 1, 1}));
  std::cerr << "wrote features (" << fm.features.dim(0) << ", " << fm.features.dim(1) << ") to "
            << out_path << "\n";
  return 0;
}

int cmd_cluster(const std::string& features_path, const std::string& data_dir,
                const std::string& split, int k, uint64_t seed, const std::string& out_path) {
  FlatTensor flat = read_flat_binary(features_path);
  const int64_t n = flat.dims[0];
  const int64_t d = static_cast<int64_t>(flat.dims[1]) * flat.dims[2] * flat.dims[3];
  if (n < 1 || d < 1) throw ValidationError("features file is empty");
  Tensor features({n, d});
  for (int64_t i = 0; i < n * d; ++i) features[i] = static_cast<double>(flat.values[static_cast<size_t>(i)]);

  KMeansResult km = kmeans(features, k, seed);

  // Ground-truth classes: the unique action/event label of each record.
  DataBundle data = load_data_dir(data_dir);
  auto records = records_of_split(data.manifest, split);
  if (static_cast<int64_t>(records.size()) != n)
    throw ValidationError("features rows (" + std::to_string(n) + ") do not match split '" +
                          split + "' (" + std::to_string(records.size()) + " records)");
  std::optional<std::vector<int>> classes = std::vector<int>();
  for (const AnnotationRecord* rec : records) {
    int found = -1;
    int count = 0;
    for (int id : rec->labels) {
      Category c = data.taxonomy.label(id).category;
      if (c == Category::Action || c == Category::Event) {
        found = id;
        ++count;
      }
    }
    if (count != 1) {
      classes.reset();
      break;
    }
    classes->push_back(found);
  }
  std::optional<double> accuracy;
  if (classes) {
    std::map<int, int> remap;
    for (int c : *classes) remap.emplace(c, 0);
    int next = 0;
    for (auto& [id, dense] : remap) dense = next++;
    std::vector<int> dense_classes;
    for (int c : *classes) dense_classes.push_back(remap[c]);
    accuracy = clustering_accuracy(km.assignments, dense_classes, k);
  }

  json j;
  j["k"] = k;
  j["inertia"] = km.inertia;
  j["accuracy"] = accuracy ? json(*accuracy) : json(nullptr);
  emit(j.dump(2) + "\n", out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"holistic video understanding toolkit"};
  app.require_subcommand(1);

  // taxonomy
  auto* taxonomy = app.add_subcommand("taxonomy", "label-space tooling");
  taxonomy->require_subcommand(1);
  std::string tax_path, man_path, out_path, out_dir;
  int min_samples = 50;

  auto* stats = taxonomy->add_subcommand("stats", "per-category label/annotation statistics");
  stats->add_option("--taxonomy", tax_path, "taxonomy CSV")->required();
  stats->add_option("--manifest", man_path, "manifest JSONL")->required();
  stats->add_option("--out", out_path, "output JSON path (default: stdout)");

  auto* prune = taxonomy->add_subcommand("prune", "drop labels with too few train-split samples");
  prune->add_option("--taxonomy", tax_path, "taxonomy CSV")->required();
  prune->add_option("--manifest", man_path, "manifest JSONL")->required();
  prune->add_option("--min-samples", min_samples, "minimum train-split videos per label")
      ->capture_default_str();
  prune->add_option("--out", out_dir, "output directory")->required();

  // dataset
  auto* dataset = app.add_subcommand("dataset", "synthetic corpus tooling");
  dataset->require_subcommand(1);
  SyntheticSpec spec;
  std::string data_dir, split = "all";

  auto* synth = dataset->add_subcommand("synth", "generate a synthetic corpus directory");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--seed", spec.seed, "corpus seed")->capture_default_str();
  synth->add_option("--train", spec.n_train, "train-split videos")->capture_default_str();
  synth->add_option("--val", spec.n_val, "val-split videos")->capture_default_str();
  synth->add_option("--test", spec.n_test, "test-split videos")->capture_default_str();
  synth->add_option("--frames", spec.frames, "frames per clip (8, 16 or 32)")
      ->capture_default_str();
  synth->add_option("--size", spec.height, "frame height = width")->capture_default_str();
  synth->add_option("--static", spec.static_labels, "static (appearance) label count")
      ->capture_default_str();
  synth->add_option("--dynamic", spec.dynamic_labels, "dynamic (motion) label count")
      ->capture_default_str();
  synth->add_option("--labels-min", spec.labels_min, "min labels per video")
      ->capture_default_str();
  synth->add_option("--labels-max", spec.labels_max, "max labels per video")
      ->capture_default_str();
  synth->add_option("--noise", spec.noise_std, "gaussian pixel noise std")->capture_default_str();

  auto* exp = dataset->add_subcommand("export", "render clips to flat binary files");
  exp->add_option("--data", data_dir, "corpus directory from `dataset synth`")->required();
  exp->add_option("--split", split, "train|val|test|all")->capture_default_str();
  exp->add_option("--out", out_dir, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
  std::string config_path, finetune_from;
  train_cmd->add_option("--config", config_path, "run config JSON")->required();
  train_cmd->add_option("--finetune-from", finetune_from,
                        "checkpoint to transfer trunk weights from");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "mAP report from a predictions file");
  std::string predictions_path;
  eval_cmd->add_option("--predictions", predictions_path, "predictions JSONL")->required();
  eval_cmd->add_option("--manifest", man_path, "manifest JSONL")->required();
  eval_cmd->add_option("--taxonomy", tax_path, "taxonomy CSV")->required();
  eval_cmd->add_option("--out", out_path, "output JSON path (default: stdout)");

  // features
  auto* features_cmd = app.add_subcommand("features", "extract post-pool trunk features");
  std::string checkpoint_path;
  int batch_size = 8;
  std::string feat_split = "test";
  features_cmd->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  features_cmd->add_option("--data", data_dir, "corpus directory")->required();
  features_cmd->add_option("--split", feat_split, "train|val|test|all")->capture_default_str();
  features_cmd->add_option("--batch-size", batch_size, "forward batch size")
      ->capture_default_str();
  features_cmd->add_option("--out", out_path, "output flat-binary path")->required();

  // cluster
  auto* cluster_cmd = app.add_subcommand("cluster", "k-means over extracted features");
  int k = 2;
  uint64_t cluster_seed = 1;
  std::string cluster_split = "test";
  cluster_cmd->add_option("--features", predictions_path, "flat-binary features file")
      ->required();
  cluster_cmd->add_option("--data", data_dir, "corpus directory (for ground-truth classes)")
      ->required();
  cluster_cmd->add_option("--split", cluster_split, "split the features were extracted from")
      ->capture_default_str();
  cluster_cmd->add_option("--k", k, "cluster count")->required();
  cluster_cmd->add_option("--seed", cluster_seed, "k-means seed")->capture_default_str();
  cluster_cmd->add_option("--out", out_path, "output JSON path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  try {
    if (stats->parsed()) return cmd_taxonomy_stats(tax_path, man_path, out_path);
    if (prune->parsed()) return cmd_taxonomy_prune(tax_path, man_path, min_samples, out_dir);
    if (synth->parsed()) {
      spec.width = spec.height;
      return cmd_dataset_synth(spec, out_dir);
    }
    if (exp->parsed()) return cmd_dataset_export(data_dir, split, out_dir);
    if (train_cmd->parsed()) return cmd_train(config_path, finetune_from);
    if (eval_cmd->parsed()) return cmd_eval(predictions_path, man_path, tax_path, out_path);
    if (features_cmd->parsed())
      return cmd_features(checkpoint_path, data_dir, feat_split, batch_size, out_path);
    if (cluster_cmd->parsed())
      return cmd_cluster(predictions_path, data_dir, cluster_split, k, cluster_seed, out_path);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (epoch " << e.epoch << ", batch " << e.batch
              << ", max |logit| " << e.max_abs_logit << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
