#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "holivid/manifest.hpp"

namespace holivid {

// The six semantic categories.  The set is closed; enum order is the
// canonical category order used for multi-task heads and reports.
enum class Category { Scene = 0, Object, Action, Event, Attribute, Concept };
inline constexpr int kNumCategories = 6;
inline constexpr std::array<Category, kNumCategories> kAllCategories = {
    Category::Scene, Category::Object, Category::Action,
    Category::Event, Category::Attribute, Category::Concept};

const char* category_name(Category c);
std::optional<Category> category_from_name(const std::string& name);

struct LabelDef {
  int id = 0;
  std::string name;
  Category category = Category::Scene;
};

// The label space: ids contiguous 0..L-1, each label in exactly one category,
// names unique within a category.
class Taxonomy {
public:
  Taxonomy() = default;
  explicit Taxonomy(std::vector<LabelDef> labels);  // validates invariants

  int size() const { return static_cast<int>(labels_.size()); }
  const LabelDef& label(int id) const { return labels_[static_cast<size_t>(id)]; }
  const std::vector<LabelDef>& labels() const { return labels_; }

  std::array<int, kNumCategories> category_counts() const;
  // Label ids of one category, ascending.
  std::vector<int> ids_of(Category c) const;
  std::array<std::vector<int>, kNumCategories> ids_by_category() const;

  std::string to_csv() const;
  // SHA-256 of the canonical CSV serialization; binds checkpoints to the
  // label space they were trained on.
  std::string fingerprint() const;

private:
  std::vector<LabelDef> labels_;
};

// CSV with header `label_id,name,category`; rows may be unordered, ids must
// be contiguous from 0.  Errors name the offending row.
Taxonomy parse_taxonomy_csv(const std::string& text);
Taxonomy load_taxonomy(const std::string& path);
void save_taxonomy(const std::string& path, const Taxonomy& tax);

// A machine-generated candidate tag.
struct MachineTag {
  std::string name;
  double confidence = 0.0;
};
using RawTagList = std::vector<MachineTag>;

// Keeps tags with confidence >= threshold, sorted by descending confidence
// (ties by ascending name), truncated to max_tags.
RawTagList filter_machine_tags(const RawTagList& raw, double threshold, int max_tags);

struct CategoryStats {
  int label_count = 0;
  int64_t annotation_count = 0;   // (video, label) pairs in this category
  int64_t video_count = 0;        // videos with >= 1 label of this category
  double annotations_per_label = 0.0;
};

struct TaxonomyStats {
  std::array<CategoryStats, kNumCategories> per_category;
  int total_labels = 0;
  int64_t total_annotations = 0;
  int64_t total_videos = 0;          // distinct videos in the manifest
  double annotations_per_label = 0.0;  // global average
};

TaxonomyStats category_stats(const Taxonomy& tax, const Manifest& manifest);

// Fraction of videos per exact category subset (key: category names joined
// by '+', in canonical category order).  Fractions sum to 1.
std::map<std::string, double> coverage_partition(const Taxonomy& tax, const Manifest& manifest);

struct PruneResult {
  Taxonomy taxonomy;
  Manifest manifest;
  // old id -> new id, or -1 if the label was removed.
  std::vector<int> id_map;
  int removed_labels = 0;
  int removed_records = 0;  // records whose label set became empty
};

// Removes labels with fewer than min_samples training-split videos,
// reindexes ids contiguously preserving order, and rewrites the manifest.
PruneResult prune_by_min_samples(const Taxonomy& tax, const Manifest& manifest, int min_samples);

}  // namespace holivid
