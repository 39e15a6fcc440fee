#include "holivid/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "holivid/error.hpp"

namespace holivid {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'H', 'V', 'I', 'D', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

uint64_t get_u64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f64(std::string& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

double get_f64(const unsigned char* p) {
  uint64_t bits = get_u64(p);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return &tensors[i];
  }
  return nullptr;
}

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["backbone"] = backbone_name(cfg.backbone);
  j["mode"] = mode_name(cfg.mode);
  j["head_mode"] = head_mode_name(cfg.head_mode);
  j["frames"] = cfg.frames;
  j["input_size"] = cfg.input_size;
  j["stage_channels"] = cfg.stage_channels;
  j["merge_norm_relu"] = cfg.merge_norm_relu;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  static const char* kKeys[] = {"backbone",   "mode",           "head_mode",      "frames",
                                "input_size", "stage_channels", "merge_norm_relu"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : kKeys) known = known || it.key() == k;
    if (!known) throw ValidationError("model config: unknown key '" + it.key() + "'");
  }
  ModelConfig cfg;
  if (j.contains("backbone")) {
    auto b = backbone_from_name(j.at("backbone").get<std::string>());
    if (!b) throw ValidationError("model config: unknown backbone '" + j.at("backbone").get<std::string>() + "'");
    cfg.backbone = *b;
  }
  if (j.contains("mode")) {
    auto m = mode_from_name(j.at("mode").get<std::string>());
    if (!m) throw ValidationError("model config: unknown mode '" + j.at("mode").get<std::string>() + "'");
    cfg.mode = *m;
  }
  if (j.contains("head_mode")) {
    auto h = head_mode_from_name(j.at("head_mode").get<std::string>());
    if (!h) throw ValidationError("model config: unknown head_mode '" + j.at("head_mode").get<std::string>() + "'");
    cfg.head_mode = *h;
  }
  if (j.contains("frames")) {
    if (!j.at("frames").is_number_integer()) throw ValidationError("model config: frames must be an integer");
    cfg.frames = j.at("frames").get<int>();
  }
  if (j.contains("input_size")) {
    if (!j.at("input_size").is_number_integer())
      throw ValidationError("model config: input_size must be an integer");
    cfg.input_size = j.at("input_size").get<int>();
  }
  if (j.contains("stage_channels")) {
    const auto& sc = j.at("stage_channels");
    if (!sc.is_array() || sc.size() != 4)
      throw ValidationError("model config: stage_channels must be an array of 4 integers");
    for (size_t i = 0; i < 4; ++i) {
      if (!sc[i].is_number_integer())
        throw ValidationError("model config: stage_channels must be an array of 4 integers");
      cfg.stage_channels[i] = sc[i].get<int64_t>();
    }
  }
  if (j.contains("merge_norm_relu")) {
    if (!j.at("merge_norm_relu").is_boolean())
      throw ValidationError("model config: merge_norm_relu must be a boolean");
    cfg.merge_norm_relu = j.at("merge_norm_relu").get<bool>();
  }
  validate_model_config(cfg);
  return cfg;
}

Checkpoint snapshot(VideoNet& net, const std::string& taxonomy_sha256, int64_t step) {
  Checkpoint ckpt;
  ckpt.config = net.config();
  ckpt.taxonomy_sha256 = taxonomy_sha256;
  ckpt.step = step;
  for (Param* p : net.params()) {
    ckpt.names.push_back(p->name);
    ckpt.tensors.push_back(p->value);
  }
  return ckpt;
}

void restore(VideoNet& net, const Checkpoint& ckpt) {
  for (Param* p : net.params()) {
    const Tensor* src = ckpt.find(p->name);
    if (src == nullptr) throw ValidationError("checkpoint: missing parameter '" + p->name + "'");
    if (!src->same_shape(p->value))
      throw ValidationError("checkpoint: shape mismatch for parameter '" + p->name + "'");
    p->value = *src;
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json header;
  header["config"] = model_config_to_json(ckpt.config);
  header["taxonomy_sha256"] = ckpt.taxonomy_sha256;
  header["step"] = ckpt.step;
  json tensors = json::array();
  for (size_t i = 0; i < ckpt.names.size(); ++i) {
    json t;
    t["name"] = ckpt.names[i];
    t["shape"] = ckpt.tensors[i].shape();
    tensors.push_back(t);
  }
  header["tensors"] = tensors;
  std::string header_bytes = header.dump();

  std::string out;
  out.append(kMagic, 8);
  put_u32(out, kVersion);
  put_u64(out, header_bytes.size());
  out += header_bytes;
  for (const Tensor& t : ckpt.tensors) {
    const double* d = t.data();
    for (int64_t i = 0; i < t.size(); ++i) put_f64(out, d[i]);
  }

  // write-temp-then-rename so a crash can't leave a torn checkpoint behind
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot open '" + tmp + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw ValidationError("failed writing checkpoint to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ValidationError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const size_t n = bytes.size();
  if (n < 20 || std::memcmp(p, kMagic, 8) != 0)
    throw ValidationError("'" + path + "' is not a checkpoint file");
  uint32_t version = get_u32(p + 8);
  if (version != kVersion)
    throw ValidationError("checkpoint '" + path + "': unsupported version " + std::to_string(version));
  uint64_t header_len = get_u64(p + 12);
  if (20 + header_len > n) throw ValidationError("checkpoint '" + path + "': truncated header");

  json header;
  try {
    header = json::parse(bytes.substr(20, header_len));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = model_config_from_json(header.at("config"));
    ckpt.taxonomy_sha256 = header.at("taxonomy_sha256").get<std::string>();
    ckpt.step = header.at("step").get<int64_t>();
    size_t off = 20 + header_len;
    for (const auto& t : header.at("tensors")) {
      std::string name = t.at("name").get<std::string>();
      std::vector<int64_t> shape = t.at("shape").get<std::vector<int64_t>>();
      Tensor tensor(shape);
      size_t need = static_cast<size_t>(tensor.size()) * 8;
      if (off + need > n) throw ValidationError("checkpoint '" + path + "': truncated tensor data");
      double* d = tensor.data();
      for (int64_t i = 0; i < tensor.size(); ++i) d[i] = get_f64(p + off + static_cast<size_t>(i) * 8);
      off += need;
      ckpt.names.push_back(std::move(name));
      ckpt.tensors.push_back(std::move(tensor));
    }
    if (off != n) throw ValidationError("checkpoint '" + path + "': trailing bytes");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint header: ") + e.what());
  }
  return ckpt;
}

}  // namespace holivid
