#pragma once

#include <optional>
#include <string>

#include "holivid/model.hpp"
#include "holivid/synthetic.hpp"
#include "holivid/train.hpp"

namespace holivid {

// `data` is either a directory produced by `dataset synth` (containing
// taxonomy.csv, manifest.jsonl and spec.json) or an inline synthetic spec.
struct DataConfig {
  std::optional<std::string> dir;
  std::optional<SyntheticSpec> synthetic;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::string out_dir;
};

// Strict: unknown keys anywhere are an error naming the key.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace holivid
