#include "holivid/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "holivid/error.hpp"

namespace holivid {

using json = nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::optional<Split> split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  return std::nullopt;
}

std::vector<const AnnotationRecord*> Manifest::split_records(Split s) const {
  std::vector<const AnnotationRecord*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

namespace {

AnnotationRecord parse_record(const json& j, size_t line_no) {
  auto fail = [line_no](const std::string& msg) -> void {
    throw ValidationError("manifest line " + std::to_string(line_no) + ": " + msg);
  };
  if (!j.is_object()) fail("record is not a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "video_id" && key != "split" && key != "labels" && key != "confidences")
      fail("unknown key \"" + key + "\"");
  }

  AnnotationRecord rec;
  if (!j.contains("video_id") || !j["video_id"].is_string()) fail("missing or non-string video_id");
  rec.video_id = j["video_id"].get<std::string>();
  if (rec.video_id.empty()) fail("empty video_id");

  if (!j.contains("split") || !j["split"].is_string()) fail("missing or non-string split");
  auto sp = split_from_name(j["split"].get<std::string>());
  if (!sp) fail("unknown split \"" + j["split"].get<std::string>() + "\"");
  rec.split = *sp;

  if (!j.contains("labels") || !j["labels"].is_array()) fail("missing or non-array labels");
  for (const auto& v : j["labels"]) {
    if (!v.is_number_integer()) fail("non-integer label id");
    int id = v.get<int>();
    if (id < 0) fail("negative label id");
    rec.labels.push_back(id);
  }
  if (rec.labels.empty()) fail("empty label set");

  std::set<int> seen(rec.labels.begin(), rec.labels.end());
  if (seen.size() != rec.labels.size()) fail("duplicate label id in record");

  if (j.contains("confidences")) {
    if (!j["confidences"].is_object()) fail("confidences is not an object");
    std::vector<std::pair<int, double>> conf;
    for (const auto& [key, v] : j["confidences"].items()) {
      int id = 0;
      try {
        size_t pos = 0;
        id = std::stoi(key, &pos);
        if (pos != key.size()) throw std::invalid_argument("");
      } catch (...) {
        fail("confidence key \"" + key + "\" is not a label id");
      }
      if (!v.is_number()) fail("non-numeric confidence for label " + key);
      double c = v.get<double>();
      if (c < 0.0 || c > 1.0) fail("confidence out of [0,1] for label " + key);
      conf.emplace_back(id, c);
    }
    if (conf.size() != rec.labels.size()) fail("confidences do not cover exactly the labels");
    std::sort(conf.begin(), conf.end());
    // rec.labels will be sorted below; confidences must match that order.
    std::vector<int> sorted_labels = rec.labels;
    std::sort(sorted_labels.begin(), sorted_labels.end());
    for (size_t i = 0; i < conf.size(); ++i) {
      if (conf[i].first != sorted_labels[i]) fail("confidences do not cover exactly the labels");
      rec.confidences.push_back(conf[i].second);
    }
  }

  std::sort(rec.labels.begin(), rec.labels.end());
  return rec;
}

}  // namespace

Manifest parse_manifest_jsonl(const std::string& text) {
  Manifest m;
  std::set<std::string> ids;
  std::istringstream is(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    AnnotationRecord rec = parse_record(j, line_no);
    if (!ids.insert(rec.video_id).second)
      throw ValidationError("manifest line " + std::to_string(line_no) + ": duplicate video_id \"" +
                            rec.video_id + "\"");
    m.records.push_back(std::move(rec));
  }
  return m;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("manifest: cannot open: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_manifest_jsonl(ss.str());
}

std::string manifest_to_jsonl(const Manifest& m) {
  std::string out;
  for (const auto& r : m.records) {
    json j;
    j["video_id"] = r.video_id;
    j["split"] = split_name(r.split);
    j["labels"] = r.labels;
    if (r.has_confidences()) {
      json c = json::object();
      for (size_t i = 0; i < r.labels.size(); ++i) c[std::to_string(r.labels[i])] = r.confidences[i];
      j["confidences"] = c;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_manifest(const std::string& path, const Manifest& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("manifest: cannot open for writing: " + path);
  os << manifest_to_jsonl(m);
  if (!os) throw ValidationError("manifest: write failed: " + path);
}

void check_label_range(const Manifest& m, int label_count) {
  for (const auto& r : m.records) {
    for (int id : r.labels) {
      if (id >= label_count)
        throw ValidationError("manifest: video \"" + r.video_id + "\" references label id " +
                              std::to_string(id) + " outside the taxonomy (L=" +
                              std::to_string(label_count) + ")");
    }
  }
}

}  // namespace holivid
