#pragma once
// Detection metrics: accuracy at threshold 0.5 and P_E, the minimum over
// thresholds of (P_FA + P_MD) / 2.

#include <algorithm>
#include <string>
#include <vector>

#include "ucnet/common.hpp"

namespace ucnet {

// Scores are stego-class probabilities (any monotone score works); labels are
// 0 = cover, 1 = stego. Classification rule: stego iff score >= threshold.
// The sweep covers every unique score plus the reject-all threshold, which is
// exhaustive: P_FA and P_MD only change at data points.
inline double p_e(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), Errc::invalid_argument, "scores/labels size mismatch");
  size_t n_cover = 0, n_stego = 0;
  for (int l : labels) {
    require(l == 0 || l == 1, Errc::invalid_argument, "labels must be 0 or 1");
    (l == 0 ? n_cover : n_stego)++;
  }
  require(n_cover > 0 && n_stego > 0, Errc::invalid_argument,
          "P_E needs both classes present");

  // Sort items by score descending; sweep thresholds from +inf downwards.
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  // Threshold above every score: nothing flagged.
  double best = 0.5 * (0.0 / double(n_cover) + double(n_stego) / double(n_stego));
  size_t fa = 0, hits = 0;
  size_t i = 0;
  while (i < order.size()) {
    // Move the threshold down to the next distinct score; all ties enter together.
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 0 ? fa : hits)++;
      ++i;
    }
    const double p_fa = double(fa) / double(n_cover);
    const double p_md = double(n_stego - hits) / double(n_stego);
    best = std::min(best, 0.5 * (p_fa + p_md));
  }
  return best;
}

struct ItemScore {
  std::string path;
  int label = 0;
  double score = 0.0;
};

struct Metrics {
  double accuracy = 0.0;
  double p_e = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<ItemScore> items;
};

inline Metrics metrics_from_items(std::vector<ItemScore> items) {
  require(!items.empty(), Errc::invalid_argument, "no items to evaluate");
  Metrics m;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& it : items) {
    scores.push_back(it.score);
    labels.push_back(it.label);
    const bool pred_stego = it.score >= 0.5;
    if (it.label == 1)
      (pred_stego ? m.tp : m.fn)++;
    else
      (pred_stego ? m.fp : m.tn)++;
  }
  m.accuracy = double(m.tp + m.tn) / double(items.size());
  m.p_e = p_e(scores, labels);
  m.items = std::move(items);
  return m;
}

// Structured-text report, one key=value or item line each.
inline std::string metrics_report(const Metrics& m) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "accuracy=%.6f\np_e=%.6f\ntp=%ld\nfp=%ld\ntn=%ld\nfn=%ld\n",
                m.accuracy, m.p_e, m.tp, m.fp, m.tn, m.fn);
  out += buf;
  for (const auto& it : m.items) {
    std::snprintf(buf, sizeof buf, "item\t%s\t%d\t%.9f\n", it.path.c_str(), it.label, it.score);
    out += buf;
  }
  return out;
}

}  // namespace ucnet
