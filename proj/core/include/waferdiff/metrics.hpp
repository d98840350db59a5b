#pragma once

// Imbalance-aware evaluation: AUROC, AUCPR (average precision), and
// yield-constrained recall. Scores rank devices; higher means more anomalous.

#include "waferdiff/common.hpp"

namespace wd {

struct LabeledScores {
  std::vector<double> scores;
  std::vector<Label> labels;
};

// Probability that a random anomaly outranks a random normal, ties counting 1/2
// (Mann-Whitney). Requires at least one score of each label.
double auroc(const LabeledScores& ls);

// Average precision with tied scores grouped at one threshold: walking distinct
// score values in descending order, sum (R_k - R_{k-1}) * P_k.
double aucpr(const LabeledScores& ls);

struct RecallAtYield {
  long recalled_count = 0;   // anomalies strictly above the threshold
  bool recalled_any = false;
  double threshold = 0.0;    // smallest normal score passing the yield fraction
};

// Threshold = smallest normal score such that the fraction of normal scores at
// or below it is >= yield_frac; recall counts anomalies strictly above it.
RecallAtYield recall_at_yield(const LabeledScores& ls, double yield_frac);

}  // namespace wd
