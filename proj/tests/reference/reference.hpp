#pragma once

// Slow, obviously-correct implementations used as test oracles. They share
// no code with the library beyond iou().

#include <algorithm>
#include <cstddef>
#include <limits>
#include <set>
#include <vector>

#include "labelaudit/geometry.hpp"

namespace labelaudit::reference {

// Pick the best remaining candidate, keep it, strike everything it overlaps.
inline std::vector<std::size_t> greedy_nms(const std::vector<Box>& boxes, const std::vector<double>& keys,
                                           double threshold, const std::set<std::size_t>& exempt = {}) {
  std::vector<bool> alive(boxes.size(), true);
  std::vector<std::size_t> kept;
  for (;;) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && (best == boxes.size() || keys[i] > keys[best])) best = i;
    }
    if (best == boxes.size()) return kept;
    kept.push_back(best);
    alive[best] = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (alive[i] && !exempt.count(i) && iou(boxes[i], boxes[best]) >= threshold) alive[i] = false;
    }
  }
}

// Mann-Whitney by enumerating every (positive, negative) pair. Missed
// positives sit below every negative and never win.
inline double pairwise_auroc(const std::vector<double>& positive_keys,
                             const std::vector<double>& negative_keys, std::size_t missed_positives) {
  double wins = 0.0;
  for (double p : positive_keys) {
    for (double n : negative_keys) {
      if (p > n) wins += 1.0;
      else if (p == n) wins += 0.5;
    }
  }
  const double pairs = static_cast<double>(positive_keys.size() + missed_positives) *
                       static_cast<double>(negative_keys.size());
  return wins / pairs;
}

struct Item {
  double key;
  int error;  // -1 for a false positive
};

// Max F1 over every threshold taken from the item keys: precision over
// items at or above the threshold, recall over distinct errors hit.
inline double enumerate_max_f1(const std::vector<Item>& items, std::size_t total_errors) {
  double best = 0.0;
  for (const auto& t : items) {
    std::size_t taken = 0;
    std::size_t tp = 0;
    std::set<int> hit;
    for (const auto& it : items) {
      if (it.key < t.key) continue;
      ++taken;
      if (it.error >= 0) {
        ++tp;
        hit.insert(it.error);
      }
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(taken);
    const double recall = total_errors ? static_cast<double>(hit.size()) / static_cast<double>(total_errors) : 0.0;
    if (precision + recall > 0.0) best = std::max(best, 2.0 * precision * recall / (precision + recall));
  }
  return best;
}

}  // namespace labelaudit::reference
