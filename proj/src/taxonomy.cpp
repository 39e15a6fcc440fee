#include "holivid/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "holivid/error.hpp"
#include "holivid/sha256.hpp"

namespace holivid {

const char* category_name(Category c) {
  switch (c) {
    case Category::Scene: return "scene";
    case Category::Object: return "object";
    case Category::Action: return "action";
    case Category::Event: return "event";
    case Category::Attribute: return "attribute";
    case Category::Concept: return "concept";
  }
  return "?";
}

std::optional<Category> category_from_name(const std::string& name) {
  for (Category c : kAllCategories) {
    if (name == category_name(c)) return c;
  }
  return std::nullopt;
}

Taxonomy::Taxonomy(std::vector<LabelDef> labels) : labels_(std::move(labels)) {
  std::sort(labels_.begin(), labels_.end(),
            [](const LabelDef& a, const LabelDef& b) { return a.id < b.id; });
  std::set<std::pair<int, std::string>> names;
  for (size_t i = 0; i < labels_.size(); ++i) {
    const LabelDef& l = labels_[i];
    if (l.id != static_cast<int>(i)) {
      if (i > 0 && l.id == labels_[i - 1].id)
        throw ValidationError("taxonomy: duplicate label_id " + std::to_string(l.id));
      throw ValidationError("taxonomy: label ids not contiguous from 0 (missing id " +
                            std::to_string(i) + ")");
    }
    if (l.name.empty()) throw ValidationError("taxonomy: empty name for label_id " + std::to_string(l.id));
    if (!names.insert({static_cast<int>(l.category), l.name}).second)
      throw ValidationError("taxonomy: duplicate name \"" + l.name + "\" in category " +
                            category_name(l.category));
  }
}

std::array<int, kNumCategories> Taxonomy::category_counts() const {
  std::array<int, kNumCategories> counts{};
  for (const auto& l : labels_) counts[static_cast<size_t>(l.category)]++;
  return counts;
}

std::vector<int> Taxonomy::ids_of(Category c) const {
  std::vector<int> out;
  for (const auto& l : labels_) {
    if (l.category == c) out.push_back(l.id);
  }
  return out;
}

std::array<std::vector<int>, kNumCategories> Taxonomy::ids_by_category() const {
  std::array<std::vector<int>, kNumCategories> out;
  for (const auto& l : labels_) out[static_cast<size_t>(l.category)].push_back(l.id);
  return out;
}

std::string Taxonomy::to_csv() const {
  std::string out = "label_id,name,category\n";
  for (const auto& l : labels_) {
    out += std::to_string(l.id);
    out += ',';
    out += l.name;
    out += ',';
    out += category_name(l.category);
    out += '\n';
  }
  return out;
}

std::string Taxonomy::fingerprint() const { return sha256_hex(to_csv()); }

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

Taxonomy parse_taxonomy_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  size_t line_no = 0;
  std::vector<LabelDef> labels;
  bool saw_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != "label_id,name,category")
        throw ValidationError("taxonomy line 1: expected header `label_id,name,category`, got `" +
                              line + "`");
      saw_header = true;
      continue;
    }
    auto fields = split_fields(line);
    auto fail = [line_no](const std::string& msg) -> void {
      throw ValidationError("taxonomy line " + std::to_string(line_no) + ": " + msg);
    };
    if (fields.size() != 3) fail("expected 3 fields, got " + std::to_string(fields.size()));
    LabelDef l;
    try {
      size_t pos = 0;
      l.id = std::stoi(fields[0], &pos);
      if (pos != fields[0].size()) throw std::invalid_argument("");
    } catch (...) {
      fail("bad label_id \"" + fields[0] + "\"");
    }
    if (l.id < 0) fail("negative label_id");
    l.name = fields[1];
    if (l.name.empty()) fail("empty name");
    auto cat = category_from_name(fields[2]);
    if (!cat) fail("unknown category \"" + fields[2] + "\"");
    l.category = *cat;
    labels.push_back(std::move(l));
  }
  if (!saw_header) throw ValidationError("taxonomy: empty file (missing header)");
  // duplicate detection before the constructor's contiguity check so the
  // error message names the duplicated id
  std::set<int> ids;
  for (const auto& l : labels) {
    if (!ids.insert(l.id).second)
      throw ValidationError("taxonomy: duplicate label_id " + std::to_string(l.id));
  }
  return Taxonomy(std::move(labels));
}

Taxonomy load_taxonomy(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("taxonomy: cannot open: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_taxonomy_csv(ss.str());
}

void save_taxonomy(const std::string& path, const Taxonomy& tax) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("taxonomy: cannot open for writing: " + path);
  os << tax.to_csv();
  if (!os) throw ValidationError("taxonomy: write failed: " + path);
}

RawTagList filter_machine_tags(const RawTagList& raw, double threshold, int max_tags) {
  if (threshold < 0.0 || threshold > 1.0)
    throw ValidationError("filter_machine_tags: threshold must be in [0,1]");
  if (max_tags < 0) throw ValidationError("filter_machine_tags: max_tags must be >= 0");
  for (const auto& t : raw) {
    if (t.confidence < 0.0 || t.confidence > 1.0)
      throw ValidationError("filter_machine_tags: confidence out of [0,1] for tag \"" + t.name + "\"");
  }
  RawTagList kept;
  for (const auto& t : raw) {
    if (t.confidence >= threshold) kept.push_back(t);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const MachineTag& a, const MachineTag& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.name < b.name;
  });
  if (static_cast<int>(kept.size()) > max_tags) kept.resize(static_cast<size_t>(max_tags));
  return kept;
}

TaxonomyStats category_stats(const Taxonomy& tax, const Manifest& manifest) {
  check_label_range(manifest, tax.size());
  TaxonomyStats stats;
  auto counts = tax.category_counts();
  for (int c = 0; c < kNumCategories; ++c) stats.per_category[static_cast<size_t>(c)].label_count = counts[static_cast<size_t>(c)];
  stats.total_labels = tax.size();
  stats.total_videos = static_cast<int64_t>(manifest.records.size());
  for (const auto& r : manifest.records) {
    std::array<bool, kNumCategories> present{};
    for (int id : r.labels) {
      auto c = static_cast<size_t>(tax.label(id).category);
      stats.per_category[c].annotation_count++;
      present[c] = true;
    }
    for (int c = 0; c < kNumCategories; ++c) {
      if (present[static_cast<size_t>(c)]) stats.per_category[static_cast<size_t>(c)].video_count++;
    }
  }
  for (auto& cs : stats.per_category) {
    stats.total_annotations += cs.annotation_count;
    if (cs.label_count > 0)
      cs.annotations_per_label = static_cast<double>(cs.annotation_count) / cs.label_count;
  }
  if (stats.total_labels > 0)
    stats.annotations_per_label = static_cast<double>(stats.total_annotations) / stats.total_labels;
  return stats;
}

std::map<std::string, double> coverage_partition(const Taxonomy& tax, const Manifest& manifest) {
  if (manifest.records.empty()) throw ValidationError("coverage_partition: no videos");
  check_label_range(manifest, tax.size());
  std::map<std::string, int64_t> counts;
  for (const auto& r : manifest.records) {
    std::array<bool, kNumCategories> present{};
    for (int id : r.labels) present[static_cast<size_t>(tax.label(id).category)] = true;
    std::string key;
    for (int c = 0; c < kNumCategories; ++c) {
      if (present[static_cast<size_t>(c)]) {
        if (!key.empty()) key += '+';
        key += category_name(static_cast<Category>(c));
      }
    }
    counts[key]++;
  }
  std::map<std::string, double> out;
  double n = static_cast<double>(manifest.records.size());
  for (const auto& [key, cnt] : counts) out[key] = static_cast<double>(cnt) / n;
  return out;
}

PruneResult prune_by_min_samples(const Taxonomy& tax, const Manifest& manifest, int min_samples) {
  if (min_samples < 0) throw ValidationError("prune_by_min_samples: min_samples must be >= 0");
  check_label_range(manifest, tax.size());

  // Training-split video count per label; a label appears at most once per
  // record, so this counts distinct videos.
  std::vector<int64_t> train_count(static_cast<size_t>(tax.size()), 0);
  for (const auto& r : manifest.records) {
    if (r.split != Split::Train) continue;
    for (int id : r.labels) train_count[static_cast<size_t>(id)]++;
  }

  PruneResult res;
  res.id_map.assign(static_cast<size_t>(tax.size()), -1);
  std::vector<LabelDef> kept;
  for (const auto& l : tax.labels()) {
    if (train_count[static_cast<size_t>(l.id)] >= min_samples) {
      int new_id = static_cast<int>(kept.size());
      res.id_map[static_cast<size_t>(l.id)] = new_id;
      LabelDef nl = l;
      nl.id = new_id;
      kept.push_back(std::move(nl));
    } else {
      res.removed_labels++;
    }
  }
  res.taxonomy = Taxonomy(std::move(kept));

  for (const auto& r : manifest.records) {
    AnnotationRecord nr;
    nr.video_id = r.video_id;
    nr.split = r.split;
    for (size_t i = 0; i < r.labels.size(); ++i) {
      int nid = res.id_map[static_cast<size_t>(r.labels[i])];
      if (nid < 0) continue;
      nr.labels.push_back(nid);
      if (r.has_confidences()) nr.confidences.push_back(r.confidences[i]);
    }
    if (nr.labels.empty()) {
      // a record with no surviving labels cannot stay (labels must be
      // nonempty); drop it
      res.removed_records++;
      continue;
    }
    res.manifest.records.push_back(std::move(nr));
  }
  return res;
}

}  // namespace holivid
