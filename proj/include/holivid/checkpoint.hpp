#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "holivid/model.hpp"
#include "holivid/tensor.hpp"

namespace holivid {

// A full parameter snapshot plus the metadata needed to rebuild the model and
// to detect that it is being replayed against the wrong label space.
struct Checkpoint {
  ModelConfig config;
  std::string taxonomy_sha256;
  int64_t step = 0;
  std::vector<std::string> names;   // registration order
  std::vector<Tensor> tensors;      // parallel to names

  const Tensor* find(const std::string& name) const;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

Checkpoint snapshot(VideoNet& net, const std::string& taxonomy_sha256, int64_t step);
// Copies matching tensors into the network. Every network parameter must be
// present with an identical shape; anything else throws.
void restore(VideoNet& net, const Checkpoint& ckpt);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace holivid
