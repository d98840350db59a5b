#include "waferdiff/metrics.hpp"

#include <algorithm>
#include <cstdint>

namespace wd {

namespace {

struct SplitScores {
  std::vector<double> normal;
  std::vector<double> anomalous;
};

SplitScores split_and_check(const LabeledScores& ls) {
  if (ls.scores.size() != ls.labels.size())
    throw ShapeError("labeled scores: scores and labels differ in length");
  SplitScores out;
  for (std::size_t i = 0; i < ls.scores.size(); ++i) {
    if (!std::isfinite(ls.scores[i]))
      throw MetricError("labeled scores contain a non-finite score");
    (ls.labels[i] == Label::anomalous ? out.anomalous : out.normal)
        .push_back(ls.scores[i]);
  }
  return out;
}

}  // namespace

double auroc(const LabeledScores& ls) {
  SplitScores s = split_and_check(ls);
  if (s.normal.empty() || s.anomalous.empty())
    throw MetricError("auroc undefined: needs both labels present");
  std::sort(s.normal.begin(), s.normal.end());
  // Count (anomaly, normal) pairs in integer arithmetic; ties weigh 1/2.
  std::uint64_t twice_wins = 0;
  for (double a : s.anomalous) {
    const auto lo = std::lower_bound(s.normal.begin(), s.normal.end(), a);
    const auto hi = std::upper_bound(lo, s.normal.end(), a);
    const auto below = static_cast<std::uint64_t>(lo - s.normal.begin());
    const auto tied = static_cast<std::uint64_t>(hi - lo);
    twice_wins += 2 * below + tied;
  }
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(s.normal.size()) *
          static_cast<double>(s.anomalous.size()));
}

double aucpr(const LabeledScores& ls) {
  SplitScores s = split_and_check(ls);
  if (s.normal.empty() || s.anomalous.empty())
    throw MetricError("aucpr undefined: needs both labels present");

  const std::size_t n = ls.scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ls.scores[a] > ls.scores[b];
  });

  const double total_pos = static_cast<double>(s.anomalous.size());
  double ap = 0.0;
  double recall_prev = 0.0;
  std::size_t tp = 0, predicted = 0;
  std::size_t i = 0;
  while (i < n) {
    // Consume the whole tie group before updating precision/recall.
    std::size_t j = i;
    while (j < n && ls.scores[order[j]] == ls.scores[order[i]]) {
      if (ls.labels[order[j]] == Label::anomalous) ++tp;
      ++j;
    }
    predicted += j - i;
    const double recall = static_cast<double>(tp) / total_pos;
    const double precision =
        static_cast<double>(tp) / static_cast<double>(predicted);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  return ap;
}

RecallAtYield recall_at_yield(const LabeledScores& ls, double yield_frac) {
  if (!(yield_frac > 0.0 && yield_frac < 1.0))
    throw RangeError("recall_at_yield: yield_frac must lie in (0, 1)");
  SplitScores s = split_and_check(ls);
  if (s.normal.empty())
    throw MetricError("recall_at_yield undefined: needs at least one normal");

  std::sort(s.normal.begin(), s.normal.end());
  const double n = static_cast<double>(s.normal.size());
  RecallAtYield out;
  out.threshold = s.normal.back();
  for (std::size_t i = 0; i < s.normal.size(); ++i) {
    // Step to the last duplicate so the counted fraction includes all ties.
    while (i + 1 < s.normal.size() && s.normal[i + 1] == s.normal[i]) ++i;
    if (static_cast<double>(i + 1) / n >= yield_frac) {
      out.threshold = s.normal[i];
      break;
    }
  }
  for (double a : s.anomalous)
    if (a > out.threshold) ++out.recalled_count;
  out.recalled_any = out.recalled_count > 0;
  return out;
}

}  // namespace wd
