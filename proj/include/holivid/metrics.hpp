#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "holivid/manifest.hpp"
#include "holivid/taxonomy.hpp"
#include "holivid/tensor.hpp"

namespace holivid {

// Ranking average precision over one label's column.  Sort by descending
// score, ties broken by ascending video index; AP = (1/P) * sum over positive
// ranks k of precision@k.  Undefined (nullopt) when there are no positives.
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<uint8_t>& relevance);

struct MapReport {
  std::vector<std::pair<int, std::optional<double>>> per_label;  // (label_id, AP)
  std::array<std::optional<double>, kNumCategories> per_category;
  std::optional<double> overall;
  std::vector<int> excluded_labels;  // zero-positive label ids
};

// The aggregation convention: overall mAP is the unweighted mean of the
// defined per-category values (not label-weighted).
std::optional<double> overall_from_categories(
    const std::array<std::optional<double>, kNumCategories>& per_category);

// scores: (N, L); relevance: (N, L) {0,1}.
MapReport map_report(const Tensor& scores, const Tensor& relevance, const Taxonomy& tax);

// Relevance matrix from records (manifest order).
Tensor relevance_matrix(const std::vector<const AnnotationRecord*>& records, int label_count);

std::string map_report_to_json(const MapReport& report);

// Single-label top-1: argmax per row (ties -> lowest label id).
double top1_accuracy(const Tensor& scores, const std::vector<int>& labels);

// Best one-to-one matching of cluster ids to class ids (Hungarian method on
// the contingency table); returns matched fraction.
double clustering_accuracy(const std::vector<int>& assignments, const std::vector<int>& labels, int k);

// Predictions JSONL: {"video_id": "...", "scores": [L reals]} per line.
void save_predictions(const std::string& path, const std::vector<std::string>& video_ids,
                      const Tensor& scores);
struct Predictions {
  std::vector<std::string> video_ids;
  Tensor scores;  // (N, L)
};
Predictions load_predictions(const std::string& path);

}  // namespace holivid
