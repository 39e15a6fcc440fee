#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "holivid/error.hpp"
#include "holivid/metrics.hpp"
#include "test_util.hpp"

using namespace holivid;

namespace {

// Brute-force AP: materialize the full (score desc, index asc) order, then
// walk it accumulating precision at every positive.
std::optional<double> ap_oracle(const std::vector<double>& scores,
                                const std::vector<uint8_t>& rel) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  int positives = 0;
  for (uint8_t r : rel) positives += r;
  if (positives == 0) return std::nullopt;
  double sum = 0;
  int hits = 0;
  for (size_t k = 0; k < order.size(); ++k) {
    if (rel[order[k]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / positives;
}

// Brute-force clustering accuracy: enumerate every one-to-one matching of
// cluster ids to class ids over the padded square and keep the best.
double cluster_acc_oracle(const std::vector<int>& assign, const std::vector<int>& labels, int k) {
  int num_classes = 0;
  for (int l : labels) num_classes = std::max(num_classes, l + 1);
  int n = std::max(k, num_classes);
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0;
  do {
    int correct = 0;
    for (size_t i = 0; i < assign.size(); ++i) {
      if (perm[static_cast<size_t>(assign[i])] == labels[i]) ++correct;
    }
    best = std::max(best, static_cast<double>(correct) / assign.size());
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("AP: perfect ranking is 1, hand case is 5/6") {
  CHECK(*average_precision({0.9, 0.5, 0.1}, {1, 1, 0}) == doctest::Approx(1.0));
  // scores (0.9,0.8,0.7,0.6), relevance (1,0,1,0) -> (1 + 2/3)/2
  CHECK(*average_precision({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}) == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("AP: ties break by ascending index") {
  // same score everywhere: effective order is the input order
  CHECK(*average_precision({0.5, 0.5, 0.5}, {1, 0, 0}) == doctest::Approx(1.0));
  CHECK(*average_precision({0.5, 0.5, 0.5}, {0, 0, 1}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("AP: no positives undefined, NaN rejected, length checked") {
  CHECK_FALSE(average_precision({0.5, 0.1}, {0, 0}).has_value());
  CHECK_THROWS_AS(average_precision({std::nan("")}, {1}), ValidationError);
  CHECK_THROWS_AS(average_precision({0.5}, {1, 0}), ValidationError);
  CHECK_THROWS_AS(average_precision({}, {}), ValidationError);
}

TEST_CASE("AP: reversed-perfect ranking matches the closed form") {
  // P positives all ranked below N-P negatives: AP = (1/P) sum_i i/(N-P+i)
  const int n = 9, p = 3;
  std::vector<double> scores(n);
  std::vector<uint8_t> rel(n, 0);
  for (int i = 0; i < n; ++i) scores[static_cast<size_t>(i)] = static_cast<double>(n - i);
  for (int i = n - p; i < n; ++i) rel[static_cast<size_t>(i)] = 1;
  double want = 0;
  for (int i = 1; i <= p; ++i) want += static_cast<double>(i) / (n - p + i);
  want /= p;
  CHECK(*average_precision(scores, rel) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("AP: invariant under strictly increasing transforms") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores(6);
    std::vector<uint8_t> rel(6);
    for (auto& s : scores) s = rng.uniform();
    bool any = false;
    for (auto& r : rel) {
      r = rng.uniform() < 0.4 ? 1 : 0;
      any = any || r;
    }
    if (!any) rel[0] = 1;
    auto base = average_precision(scores, rel);
    std::vector<double> warped(6);
    for (size_t i = 0; i < 6; ++i) warped[i] = std::exp(3.0 * scores[i]) - 2.0;
    CHECK(*average_precision(warped, rel) == doctest::Approx(*base).epsilon(1e-12));
  }
}

TEST_CASE("AP matches the brute-force oracle on 200 random instances") {
  Rng rng(4242);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_index(8));
    std::vector<double> scores(static_cast<size_t>(n));
    std::vector<uint8_t> rel(static_cast<size_t>(n));
    for (auto& s : scores) {
      // coarse grid so ties actually happen
      s = static_cast<double>(rng.uniform_index(4)) / 4.0;
    }
    for (auto& r : rel) r = rng.uniform() < 0.5 ? 1 : 0;
    auto got = average_precision(scores, rel);
    auto want = ap_oracle(scores, rel);
    REQUIRE(got.has_value() == want.has_value());
    if (got) CHECK(*got == doctest::Approx(*want).epsilon(1e-9));
  }
}

TEST_CASE("overall mAP is the unweighted mean of defined category values") {
  std::array<std::optional<double>, kNumCategories> per;
  per.fill(std::nullopt);
  CHECK_FALSE(overall_from_categories(per).has_value());
  per[0] = 0.5;
  per[2] = 1.0;
  CHECK(*overall_from_categories(per) == doctest::Approx(0.75));
  per.fill(0.25);
  CHECK(*overall_from_categories(per) == doctest::Approx(0.25));
}

TEST_CASE("map_report: hand-built matrix with zero-positive exclusion") {
  Taxonomy tax = parse_taxonomy_csv(
      "label_id,name,category\n"
      "0,a,scene\n"
      "1,b,scene\n"
      "2,c,action\n"
      "3,d,event\n");
  // 3 videos; label 3 has no positives anywhere
  Tensor scores({3, 4});
  double s[12] = {0.9, 0.2, 0.3, 0.5,   //
                  0.1, 0.8, 0.9, 0.5,   //
                  0.2, 0.7, 0.5, 0.5};  //
  std::copy(s, s + 12, scores.data());
  Tensor rel({3, 4});
  double r[12] = {1, 0, 0, 0,   //
                  0, 1, 1, 0,   //
                  0, 1, 0, 0};  //
  std::copy(r, r + 12, rel.data());

  MapReport rep = map_report(scores, rel, tax);
  REQUIRE(rep.per_label.size() == 4);
  CHECK(rep.per_label[0].second == doctest::Approx(1.0));
  CHECK(rep.per_label[1].second == doctest::Approx(1.0));
  CHECK(rep.per_label[2].second == doctest::Approx(1.0));
  CHECK_FALSE(rep.per_label[3].second.has_value());
  CHECK(rep.excluded_labels == std::vector<int>{3});

  CHECK(*rep.per_category[static_cast<size_t>(Category::Scene)] == doctest::Approx(1.0));
  CHECK(*rep.per_category[static_cast<size_t>(Category::Action)] == doctest::Approx(1.0));
  CHECK_FALSE(rep.per_category[static_cast<size_t>(Category::Event)].has_value());
  CHECK_FALSE(rep.per_category[static_cast<size_t>(Category::Object)].has_value());
  CHECK(*rep.overall == doctest::Approx(1.0));

  // json shape: sorted keys, nulls for undefined
  auto j = nlohmann::json::parse(map_report_to_json(rep));
  CHECK(j.at("overall").get<double>() == doctest::Approx(1.0));
  CHECK(j.at("per_category").at("event").is_null());
  CHECK(j.at("excluded_labels") == nlohmann::json::array({3}));
}

TEST_CASE("map_report: category mean averages only defined label APs") {
  Taxonomy tax = parse_taxonomy_csv(
      "label_id,name,category\n"
      "0,a,scene\n"
      "1,b,scene\n");
  Tensor scores({2, 2});
  scores[0] = 0.9;
  scores[1] = 0.1;
  scores[2] = 0.2;
  scores[3] = 0.8;
  Tensor rel({2, 2});
  rel[0] = 0;  // label 0: no positives
  rel[2] = 0;
  rel[1] = 0;  // label 1: video 1 positive, ranked first
  rel[3] = 1;
  MapReport rep = map_report(scores, rel, tax);
  CHECK_FALSE(rep.per_label[0].second.has_value());
  CHECK(*rep.per_category[0] == doctest::Approx(1.0));
  CHECK(*rep.overall == doctest::Approx(1.0));
}

TEST_CASE("map_report validates shapes") {
  Taxonomy tax = parse_taxonomy_csv("label_id,name,category\n0,a,scene\n");
  Tensor scores({2, 2});
  Tensor rel({2, 1});
  CHECK_THROWS_AS(map_report(scores, rel, tax), ValidationError);
}

TEST_CASE("relevance_matrix reflects record labels") {
  AnnotationRecord r1{"a", Split::Train, {0, 2}, {}};
  AnnotationRecord r2{"b", Split::Train, {1}, {}};
  Tensor rel = relevance_matrix({&r1, &r2}, 3);
  CHECK(rel.shape() == std::vector<int64_t>{2, 3});
  CHECK(rel[0] == 1.0);
  CHECK(rel[1] == 0.0);
  CHECK(rel[2] == 1.0);
  CHECK(rel[3] == 0.0);
  CHECK(rel[4] == 1.0);
  CHECK(rel[5] == 0.0);
}

TEST_CASE("top1: ties go to the lowest label id; hand case 0.75") {
  Tensor scores({2, 2});
  scores.fill(0.5);
  CHECK(top1_accuracy(scores, {0, 0}) == doctest::Approx(1.0));
  CHECK(top1_accuracy(scores, {1, 1}) == doctest::Approx(0.0));

  Tensor s4({4, 3});
  double vals[12] = {0.9, 0.1, 0.0,   //
                     0.1, 0.8, 0.2,   //
                     0.3, 0.2, 0.9,   //
                     0.9, 0.0, 0.1};  // wrong for label 2
  std::copy(vals, vals + 12, s4.data());
  CHECK(top1_accuracy(s4, {0, 1, 2, 2}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(top1_accuracy(s4, {0, 1}), ValidationError);
  CHECK_THROWS_AS(top1_accuracy(s4, {0, 1, 2, 3}), ValidationError);
}

TEST_CASE("clustering accuracy: relabeling invariance and hand cases") {
  CHECK(clustering_accuracy({1, 1, 0, 0}, {0, 0, 1, 1}, 2) == doctest::Approx(1.0));
  CHECK(clustering_accuracy({0, 1, 0, 1}, {0, 0, 1, 1}, 2) == doctest::Approx(0.5));
  // k=1: majority class frequency
  CHECK(clustering_accuracy({0, 0, 0}, {1, 1, 0}, 1) == doctest::Approx(2.0 / 3.0));
  // more clusters than classes
  CHECK(clustering_accuracy({0, 1, 2}, {0, 0, 0}, 3) == doctest::Approx(1.0 / 3.0));
  // more classes than clusters
  CHECK(clustering_accuracy({0, 0}, {0, 1}, 1) == doctest::Approx(0.5));
}

TEST_CASE("clustering accuracy matches brute-force matching for k <= 4") {
  Rng rng(777);
  for (int trial = 0; trial < 100; ++trial) {
    int k = 1 + static_cast<int>(rng.uniform_index(4));
    int classes = 1 + static_cast<int>(rng.uniform_index(4));
    int n = 2 + static_cast<int>(rng.uniform_index(12));
    std::vector<int> assign(static_cast<size_t>(n)), labels(static_cast<size_t>(n));
    for (auto& a : assign) a = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(k)));
    for (auto& l : labels) l = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(classes)));
    CHECK(clustering_accuracy(assign, labels, k) ==
          doctest::Approx(cluster_acc_oracle(assign, labels, k)).epsilon(1e-12));
  }
}

TEST_CASE("predictions files round-trip and reject rag") {
  testutil::TempDir dir;
  Tensor scores({2, 3});
  for (int64_t i = 0; i < 6; ++i) scores[i] = 0.1 * static_cast<double>(i);
  save_predictions(dir.file("p.jsonl"), {"a", "b"}, scores);
  Predictions back = load_predictions(dir.file("p.jsonl"));
  CHECK(back.video_ids == std::vector<std::string>{"a", "b"});
  REQUIRE(back.scores.shape() == scores.shape());
  for (int64_t i = 0; i < 6; ++i) CHECK(back.scores[i] == scores[i]);

  // byte stability
  save_predictions(dir.file("p2.jsonl"), {"a", "b"}, scores);
  CHECK(testutil::slurp(dir.file("p.jsonl")) == testutil::slurp(dir.file("p2.jsonl")));

  testutil::spit(dir.file("ragged.jsonl"),
                 R"({"video_id":"a","scores":[0.1,0.2]})"
                 "\n"
                 R"({"video_id":"b","scores":[0.3]})"
                 "\n");
  CHECK_THROWS_AS(load_predictions(dir.file("ragged.jsonl")), ValidationError);
  testutil::spit(dir.file("bad.jsonl"), R"({"video_id":"a","scores":["x"]})" "\n");
  CHECK_THROWS_AS(load_predictions(dir.file("bad.jsonl")), ValidationError);
}

TEST_SUITE_END();
