#pragma once

#include <optional>
#include <string>
#include <vector>

namespace holivid {

enum class Split { Train, Val, Test };

const char* split_name(Split s);
std::optional<Split> split_from_name(const std::string& name);

// One video's annotation: its split, label ids, and (optionally) the machine
// confidence per label.  Label ids are kept sorted ascending.
struct AnnotationRecord {
  std::string video_id;
  Split split = Split::Train;
  std::vector<int> labels;
  std::vector<double> confidences;  // empty, or parallel to labels

  bool has_confidences() const { return !confidences.empty(); }
};

struct Manifest {
  std::vector<AnnotationRecord> records;

  std::vector<const AnnotationRecord*> split_records(Split s) const;
};

// Parses JSONL: one record per line:
//   {"video_id": "...", "split": "train", "labels": [0,3],
//    "confidences": {"0": 0.9, "3": 0.8}}   (confidences optional)
// Errors carry the 1-based line number.
Manifest parse_manifest_jsonl(const std::string& text);
Manifest load_manifest(const std::string& path);
std::string manifest_to_jsonl(const Manifest& m);
void save_manifest(const std::string& path, const Manifest& m);

// Checks every label id against a label-space size; throws on dangling ids.
void check_label_range(const Manifest& m, int label_count);

}  // namespace holivid
