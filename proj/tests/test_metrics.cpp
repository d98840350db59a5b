// Ranking metrics against hand-computed values and independent brute-force
// oracles, including tie handling and the yield-threshold convention.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "waferdiff/common.hpp"
#include "waferdiff/metrics.hpp"

using namespace wd;

namespace {

LabeledScores make(const std::vector<double>& normal,
                   const std::vector<double>& anomalous) {
  LabeledScores ls;
  for (double s : normal) {
    ls.scores.push_back(s);
    ls.labels.push_back(Label::normal);
  }
  for (double s : anomalous) {
    ls.scores.push_back(s);
    ls.labels.push_back(Label::anomalous);
  }
  return ls;
}

// O(n^2) pairwise Mann-Whitney count, the straight-line definition.
double brute_auroc(const LabeledScores& ls) {
  std::uint64_t twice = 0, pairs = 0;
  for (std::size_t i = 0; i < ls.scores.size(); ++i) {
    if (ls.labels[i] != Label::anomalous) continue;
    for (std::size_t j = 0; j < ls.scores.size(); ++j) {
      if (ls.labels[j] != Label::normal) continue;
      ++pairs;
      if (ls.scores[i] > ls.scores[j])
        twice += 2;
      else if (ls.scores[i] == ls.scores[j])
        twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

// Average precision by recounting precision/recall from scratch at every
// distinct threshold, descending.
double brute_aucpr(const LabeledScores& ls) {
  std::vector<double> thresholds = ls.scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  std::size_t total_pos = 0;
  for (Label l : ls.labels)
    if (l == Label::anomalous) ++total_pos;

  double ap = 0.0, recall_prev = 0.0;
  for (double th : thresholds) {
    std::size_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < ls.scores.size(); ++i) {
      if (ls.scores[i] >= th) {
        ++predicted;
        if (ls.labels[i] == Label::anomalous) ++tp;
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision =
        static_cast<double>(tp) / static_cast<double>(predicted);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
  }
  return ap;
}

RecallAtYield brute_recall(const LabeledScores& ls, double yield_frac) {
  std::vector<double> normals;
  for (std::size_t i = 0; i < ls.scores.size(); ++i)
    if (ls.labels[i] == Label::normal) normals.push_back(ls.scores[i]);
  std::sort(normals.begin(), normals.end());

  RecallAtYield out;
  out.threshold = normals.back();
  for (double candidate : normals) {
    std::size_t at_or_below = 0;
    for (double v : normals)
      if (v <= candidate) ++at_or_below;
    if (static_cast<double>(at_or_below) /
            static_cast<double>(normals.size()) >=
        yield_frac) {
      out.threshold = candidate;
      break;
    }
  }
  for (std::size_t i = 0; i < ls.scores.size(); ++i)
    if (ls.labels[i] == Label::anomalous && ls.scores[i] > out.threshold)
      ++out.recalled_count;
  out.recalled_any = out.recalled_count > 0;
  return out;
}

LabeledScores random_instance(Rng& rng) {
  const auto n = static_cast<std::size_t>(2 + rng.below(49));  // N in [2, 50]
  const auto n_anom = static_cast<std::size_t>(1 + rng.below(n - 1));
  const bool coarse = rng.below(2) == 0;  // integer grid forces ties
  LabeledScores ls;
  for (std::size_t i = 0; i < n; ++i) {
    ls.scores.push_back(coarse ? static_cast<double>(rng.below(8))
                               : rng.normal());
    ls.labels.push_back(i < n_anom ? Label::anomalous : Label::normal);
  }
  return ls;
}

}  // namespace

TEST_CASE("auroc on pinned instances") {
  CHECK(auroc(make({1, 2, 3}, {4})) == 1.0);          // perfect separation
  CHECK(auroc(make({1, 3}, {2})) == 0.5);             // one win, one loss
  CHECK(auroc(make({1, 2}, {2})) == 0.75);            // tie counts half
  CHECK(auroc(make({4}, {1, 2, 3})) == 0.0);          // perfectly wrong
}

TEST_CASE("aucpr on pinned instances") {
  CHECK(aucpr(make({1, 2, 3}, {4})) == 1.0);
  // Ranking [3(n), 2(a), 1(n)]: the only recall step has precision 1/2.
  CHECK(aucpr(make({1, 3}, {2})) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("recall_at_yield threshold convention") {
  std::vector<double> normals(100);
  for (int i = 0; i < 100; ++i) normals[static_cast<std::size_t>(i)] = i + 1;

  auto r = recall_at_yield(make(normals, {99.5}), 0.95);
  CHECK(r.threshold == 95.0);
  CHECK(r.recalled_count == 1);
  CHECK(r.recalled_any);

  auto below = recall_at_yield(make(normals, {0.5}), 0.95);
  CHECK(below.recalled_count == 0);
  CHECK_FALSE(below.recalled_any);

  auto above = recall_at_yield(make(normals, {101, 102, 103}), 0.95);
  CHECK(above.recalled_count == 3);
}

TEST_CASE("degenerate inputs raise the undefined-metric error") {
  CHECK_THROWS_AS(auroc(make({1, 2}, {})), MetricError);
  CHECK_THROWS_AS(auroc(make({}, {1, 2})), MetricError);
  CHECK_THROWS_AS(aucpr(make({1}, {})), MetricError);
  CHECK_THROWS_AS(recall_at_yield(make({}, {1}), 0.95), MetricError);
  CHECK_THROWS_AS(recall_at_yield(make({1}, {2}), 1.0), RangeError);
  CHECK_THROWS_AS(recall_at_yield(make({1}, {2}), 0.0), RangeError);
}

TEST_CASE("all three metrics match brute-force oracles on 1000 instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const LabeledScores ls = random_instance(rng);
    CHECK(auroc(ls) == brute_auroc(ls));
    CHECK(std::abs(aucpr(ls) - brute_aucpr(ls)) <= 1e-9);
    const auto got = recall_at_yield(ls, 0.9);
    const auto want = brute_recall(ls, 0.9);
    CHECK(got.threshold == want.threshold);
    CHECK(got.recalled_count == want.recalled_count);
    CHECK(got.recalled_any == want.recalled_any);
  }
}

TEST_CASE("metrics are invariant under strictly increasing transforms") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const LabeledScores ls = random_instance(rng);
    LabeledScores mapped = ls;
    for (double& s : mapped.scores) s = 3.0 * s + 7.0;
    CHECK(auroc(ls) == auroc(mapped));
    CHECK(aucpr(ls) == doctest::Approx(aucpr(mapped)).epsilon(1e-12));
    CHECK(recall_at_yield(ls, 0.9).recalled_count ==
          recall_at_yield(mapped, 0.9).recalled_count);
  }
}

TEST_CASE("auroc of negated scores complements when there are no ties") {
  Rng rng(66);
  LabeledScores ls;
  for (int i = 0; i < 40; ++i) {
    ls.scores.push_back(rng.normal());  // continuous draws: ties have measure 0
    ls.labels.push_back(i < 15 ? Label::anomalous : Label::normal);
  }
  LabeledScores neg = ls;
  for (double& s : neg.scores) s = -s;
  CHECK(auroc(ls) + auroc(neg) == doctest::Approx(1.0).epsilon(1e-12));
}
