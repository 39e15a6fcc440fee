#include "holivid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "holivid/error.hpp"

namespace holivid {

using json = nlohmann::json;

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<uint8_t>& relevance) {
  if (scores.size() != relevance.size())
    throw ValidationError("average_precision: scores/relevance length mismatch");
  if (scores.empty()) throw ValidationError("average_precision: empty input");
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("average_precision: non-finite score");
  }
  const size_t n = scores.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  // descending score; equal scores keep ascending video index (stable)
  std::stable_sort(order.begin(), order.end(),
                   [&scores](int a, int b) { return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)]; });
  int64_t positives = 0;
  double sum = 0.0;
  for (size_t rank = 0; rank < n; ++rank) {
    if (relevance[static_cast<size_t>(order[rank])]) {
      ++positives;
      sum += static_cast<double>(positives) / static_cast<double>(rank + 1);
    }
  }
  if (positives == 0) return std::nullopt;
  return sum / static_cast<double>(positives);
}

std::optional<double> overall_from_categories(
    const std::array<std::optional<double>, kNumCategories>& per_category) {
  double sum = 0.0;
  int defined = 0;
  for (const auto& v : per_category) {
    if (v) {
      sum += *v;
      ++defined;
    }
  }
  if (defined == 0) return std::nullopt;
  return sum / defined;
}

Tensor relevance_matrix(const std::vector<const AnnotationRecord*>& records, int label_count) {
  Tensor rel({static_cast<int64_t>(records.size()), label_count});
  for (size_t i = 0; i < records.size(); ++i) {
    for (int id : records[i]->labels) {
      if (id >= label_count)
        throw ValidationError("relevance: label id out of range for video " + records[i]->video_id);
      rel[static_cast<int64_t>(i) * label_count + id] = 1.0;
    }
  }
  return rel;
}

MapReport map_report(const Tensor& scores, const Tensor& relevance, const Taxonomy& tax) {
  if (scores.rank() != 2 || relevance.rank() != 2)
    throw ValidationError("map_report: scores and relevance must be rank-2");
  if (!scores.same_shape(relevance)) throw ValidationError("map_report: scores/relevance shape mismatch");
  const int64_t n = scores.dim(0);
  const int64_t l = scores.dim(1);
  if (l != tax.size()) throw ValidationError("map_report: width does not match the taxonomy");

  MapReport report;
  std::array<double, kNumCategories> cat_sum{};
  std::array<int, kNumCategories> cat_defined{};
  std::vector<double> col(static_cast<size_t>(n));
  std::vector<uint8_t> rel(static_cast<size_t>(n));
  for (int64_t j = 0; j < l; ++j) {
    for (int64_t i = 0; i < n; ++i) {
      col[static_cast<size_t>(i)] = scores[i * l + j];
      double r = relevance[i * l + j];
      if (r != 0.0 && r != 1.0) throw ValidationError("map_report: relevance must be {0,1}");
      rel[static_cast<size_t>(i)] = r != 0.0;
    }
    std::optional<double> ap;
    if (n > 0) ap = average_precision(col, rel);
    report.per_label.emplace_back(static_cast<int>(j), ap);
    auto c = static_cast<size_t>(tax.label(static_cast<int>(j)).category);
    if (ap) {
      cat_sum[c] += *ap;
      cat_defined[c]++;
    } else {
      report.excluded_labels.push_back(static_cast<int>(j));
    }
  }
  for (int c = 0; c < kNumCategories; ++c) {
    if (cat_defined[static_cast<size_t>(c)] > 0)
      report.per_category[static_cast<size_t>(c)] =
          cat_sum[static_cast<size_t>(c)] / cat_defined[static_cast<size_t>(c)];
  }
  report.overall = overall_from_categories(report.per_category);
  return report;
}

std::string map_report_to_json(const MapReport& report) {
  json j;
  json per_label = json::array();
  for (const auto& [id, ap] : report.per_label) {
    json e;
    e["label_id"] = id;
    if (ap) e["ap"] = *ap; else e["ap"] = nullptr;
    per_label.push_back(e);
  }
  j["per_label"] = per_label;
  json per_cat = json::object();
  for (int c = 0; c < kNumCategories; ++c) {
    const auto& v = report.per_category[static_cast<size_t>(c)];
    if (v) per_cat[category_name(static_cast<Category>(c))] = *v;
    else per_cat[category_name(static_cast<Category>(c))] = nullptr;
  }
  j["per_category"] = per_cat;
  if (report.overall) j["overall"] = *report.overall; else j["overall"] = nullptr;
  j["excluded_labels"] = report.excluded_labels;
  return j.dump(2) + "\n";
}

double top1_accuracy(const Tensor& scores, const std::vector<int>& labels) {
  if (scores.rank() != 2) throw ValidationError("top1_accuracy: scores must be rank-2");
  const int64_t n = scores.dim(0);
  const int64_t l = scores.dim(1);
  if (n != static_cast<int64_t>(labels.size()))
    throw ValidationError("top1_accuracy: labels length mismatch");
  if (n == 0) return 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= l)
      throw ValidationError("top1_accuracy: label " + std::to_string(labels[i]) +
                            " out of range for " + std::to_string(l) + " classes");
  }
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double* row = scores.data() + i * l;
    int64_t best = 0;
    for (int64_t j = 1; j < l; ++j) {
      if (row[j] > row[best]) best = j;  // strict: ties keep the lowest id
    }
    if (best == labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

// Max-weight perfect matching on a square cost matrix via the Hungarian
// algorithm (potentials formulation, O(n^3)).  Returns the maximum total
// weight.  weights[i][j] >= 0.
double hungarian_max(const std::vector<std::vector<double>>& weights) {
  const int n = static_cast<int>(weights.size());
  if (n == 0) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  // Standard minimization formulation on negated weights, 1-based arrays.
  std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(n + 1), 0.0);
  std::vector<int> p(static_cast<size_t>(n + 1), 0), way(static_cast<size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<size_t>(n + 1), inf);
    std::vector<char> used(static_cast<size_t>(n + 1), false);
    do {
      used[static_cast<size_t>(j0)] = true;
      int i0 = p[static_cast<size_t>(j0)], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) continue;
        double cur = -weights[static_cast<size_t>(i0 - 1)][static_cast<size_t>(j - 1)] -
                     u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
        if (cur < minv[static_cast<size_t>(j)]) {
          minv[static_cast<size_t>(j)] = cur;
          way[static_cast<size_t>(j)] = j0;
        }
        if (minv[static_cast<size_t>(j)] < delta) {
          delta = minv[static_cast<size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<size_t>(j)]) {
          u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
          v[static_cast<size_t>(j)] -= delta;
        } else {
          minv[static_cast<size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<size_t>(j0)];
      p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) {
    if (p[static_cast<size_t>(j)] > 0)
      total += weights[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)][static_cast<size_t>(j - 1)];
  }
  return total;
}

}  // namespace

double clustering_accuracy(const std::vector<int>& assignments, const std::vector<int>& labels, int k) {
  if (assignments.size() != labels.size())
    throw ValidationError("clustering_accuracy: length mismatch");
  if (assignments.empty()) throw ValidationError("clustering_accuracy: empty input");
  if (k < 1) throw ValidationError("clustering_accuracy: k must be >= 1");
  int num_classes = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (assignments[i] < 0 || assignments[i] >= k)
      throw ValidationError("clustering_accuracy: assignment out of [0,k)");
    if (labels[i] < 0) throw ValidationError("clustering_accuracy: negative class label");
    num_classes = std::max(num_classes, labels[i] + 1);
  }
  // contingency table, padded square so the matching is one-to-one;
  // unmatched mass simply never contributes
  int n = std::max(k, num_classes);
  std::vector<std::vector<double>> table(static_cast<size_t>(n),
                                         std::vector<double>(static_cast<size_t>(n), 0.0));
  for (size_t i = 0; i < labels.size(); ++i)
    table[static_cast<size_t>(assignments[i])][static_cast<size_t>(labels[i])] += 1.0;
  return hungarian_max(table) / static_cast<double>(labels.size());
}

void save_predictions(const std::string& path, const std::vector<std::string>& video_ids,
                      const Tensor& scores) {
  if (scores.rank() != 2 || scores.dim(0) != static_cast<int64_t>(video_ids.size()))
    throw ValidationError("predictions: ids/scores shape mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("predictions: cannot open for writing: " + path);
  const int64_t l = scores.dim(1);
  for (size_t i = 0; i < video_ids.size(); ++i) {
    json j;
    j["video_id"] = video_ids[i];
    std::vector<double> row(scores.data() + static_cast<int64_t>(i) * l,
                            scores.data() + static_cast<int64_t>(i + 1) * l);
    j["scores"] = row;
    os << j.dump() << '\n';
  }
  if (!os) throw ValidationError("predictions: write failed: " + path);
}

Predictions load_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("predictions: cannot open: " + path);
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::string line;
  size_t line_no = 0;
  int64_t width = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("video_id") || !j.contains("scores") ||
        !j["video_id"].is_string() || !j["scores"].is_array())
      throw ValidationError("predictions line " + std::to_string(line_no) +
                            ": expected {\"video_id\",\"scores\"}");
    std::vector<double> row;
    for (const auto& v : j["scores"]) {
      if (!v.is_number())
        throw ValidationError("predictions line " + std::to_string(line_no) + ": non-numeric score");
      row.push_back(v.get<double>());
    }
    if (width < 0) width = static_cast<int64_t>(row.size());
    if (static_cast<int64_t>(row.size()) != width)
      throw ValidationError("predictions line " + std::to_string(line_no) + ": ragged score rows");
    ids.push_back(j["video_id"].get<std::string>());
    rows.push_back(std::move(row));
  }
  Predictions p;
  p.video_ids = std::move(ids);
  p.scores = Tensor({static_cast<int64_t>(rows.size()), std::max<int64_t>(width, 0)});
  for (size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), p.scores.data() + static_cast<int64_t>(i) * width);
  }
  return p;
}

}  // namespace holivid
