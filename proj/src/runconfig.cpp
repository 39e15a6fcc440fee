#include "holivid/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "holivid/error.hpp"

namespace holivid {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok)
      throw ValidationError(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

int require_int(const json& j, const char* key, const char* where) {
  if (!j.at(key).is_number_integer())
    throw ValidationError(std::string(where) + ": '" + key + "' must be an integer");
  return j.at(key).get<int>();
}

double require_number(const json& j, const char* key, const char* where) {
  if (!j.at(key).is_number())
    throw ValidationError(std::string(where) + ": '" + key + "' must be a number");
  return j.at(key).get<double>();
}

TrainConfig parse_train_section(const json& j) {
  reject_unknown(j,
                 {"epochs", "batch_size", "lr", "momentum", "weight_decay", "lr_steps", "lr_decay",
                  "seed", "active_categories", "loss_weights", "head_mode", "stop_at_train_map"},
                 "train config");
  TrainConfig cfg;
  if (j.contains("epochs")) cfg.epochs = require_int(j, "epochs", "train config");
  if (j.contains("batch_size")) cfg.batch_size = require_int(j, "batch_size", "train config");
  if (j.contains("lr")) cfg.lr = require_number(j, "lr", "train config");
  if (j.contains("momentum")) cfg.momentum = require_number(j, "momentum", "train config");
  if (j.contains("weight_decay")) cfg.weight_decay = require_number(j, "weight_decay", "train config");
  if (j.contains("lr_decay")) cfg.lr_decay = require_number(j, "lr_decay", "train config");
  if (j.contains("lr_steps")) {
    if (!j.at("lr_steps").is_array())
      throw ValidationError("train config: 'lr_steps' must be an array of integers");
    for (const auto& s : j.at("lr_steps")) {
      if (!s.is_number_integer())
        throw ValidationError("train config: 'lr_steps' must be an array of integers");
      cfg.lr_steps.push_back(s.get<int>());
    }
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer() || j.at("seed").get<int64_t>() < 0)
      throw ValidationError("train config: 'seed' must be a non-negative integer");
    cfg.seed = j.at("seed").get<uint64_t>();
  }
  if (j.contains("active_categories")) {
    const auto& a = j.at("active_categories");
    if (!a.is_array())
      throw ValidationError("train config: 'active_categories' must be an array of category names");
    cfg.active_categories.fill(false);
    std::set<std::string> seen;
    for (const auto& e : a) {
      if (!e.is_string())
        throw ValidationError("train config: 'active_categories' must be an array of category names");
      std::string name = e.get<std::string>();
      auto c = category_from_name(name);
      if (!c) throw ValidationError("train config: unknown category '" + name + "'");
      if (!seen.insert(name).second)
        throw ValidationError("train config: duplicate category '" + name + "'");
      cfg.active_categories[static_cast<size_t>(*c)] = true;
    }
  }
  if (j.contains("loss_weights")) {
    const auto& w = j.at("loss_weights");
    if (!w.is_object())
      throw ValidationError("train config: 'loss_weights' must map category names to numbers");
    for (auto it = w.begin(); it != w.end(); ++it) {
      auto c = category_from_name(it.key());
      if (!c) throw ValidationError("train config: unknown category '" + it.key() + "'");
      if (!it.value().is_number())
        throw ValidationError("train config: 'loss_weights' must map category names to numbers");
      cfg.loss_weights[static_cast<size_t>(*c)] = it.value().get<double>();
    }
  }
  if (j.contains("head_mode")) {
    std::string h = j.at("head_mode").get<std::string>();
    auto hm = head_mode_from_name(h);
    if (!hm) throw ValidationError("train config: unknown head_mode '" + h + "'");
    cfg.head_mode = *hm;
  }
  if (j.contains("stop_at_train_map"))
    cfg.stop_at_train_map = require_number(j, "stop_at_train_map", "train config");
  validate_train_config(cfg);
  return cfg;
}

DataConfig parse_data_section(const json& j) {
  reject_unknown(j, {"dir", "synthetic"}, "data config");
  DataConfig cfg;
  if (j.contains("dir")) {
    if (!j.at("dir").is_string()) throw ValidationError("data config: 'dir' must be a string");
    cfg.dir = j.at("dir").get<std::string>();
  }
  if (j.contains("synthetic")) cfg.synthetic = spec_from_json_text(j.at("synthetic").dump());
  if (cfg.dir.has_value() == cfg.synthetic.has_value())
    throw ValidationError("data config: exactly one of 'dir' or 'synthetic' is required");
  return cfg;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("run config: top level must be an object");
  reject_unknown(j, {"model", "train", "data", "paths"}, "run config");
  RunConfig cfg;
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) cfg.train = parse_train_section(j.at("train"));
  if (!j.contains("data")) throw ValidationError("run config: missing 'data' section");
  cfg.data = parse_data_section(j.at("data"));
  if (!j.contains("paths")) throw ValidationError("run config: missing 'paths' section");
  const auto& paths = j.at("paths");
  reject_unknown(paths, {"out"}, "paths config");
  if (!paths.contains("out") || !paths.at("out").is_string())
    throw ValidationError("paths config: 'out' must be a string");
  cfg.out_dir = paths.at("out").get<std::string>();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open run config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace holivid
