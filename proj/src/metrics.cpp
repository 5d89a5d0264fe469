#include "sgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace sgt {

double auroc(const std::vector<ScoredSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("auroc: empty input");
  int64_t n_pos = 0;
  int64_t n_neg = 0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw std::invalid_argument("auroc: non-finite score");
    if (s.label != 0 && s.label != 1) throw std::invalid_argument("auroc: labels must be 0 or 1");
    (s.label == 1 ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("auroc: undefined for single-class input");
  }

  std::vector<const ScoredSample*> order;
  order.reserve(samples.size());
  for (const auto& s : samples) order.push_back(&s);
  std::sort(order.begin(), order.end(),
            [](const ScoredSample* a, const ScoredSample* b) { return a->score < b->score; });

  // Midrank tie handling in doubled integer arithmetic: a tie group occupying
  // 1-based ranks [lo, hi] has twice-midrank lo + hi, so the doubled rank sum
  // over positives stays exactly representable in int64.
  const int64_t n = static_cast<int64_t>(order.size());
  int64_t twice_rank_sum_pos = 0;
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j + 1 < n && order[j + 1]->score == order[i]->score) ++j;
    const int64_t twice_midrank = (i + 1) + (j + 1);
    int64_t pos_in_group = 0;
    for (int64_t k = i; k <= j; ++k) pos_in_group += order[k]->label;
    twice_rank_sum_pos += pos_in_group * twice_midrank;
    i = j + 1;
  }

  // U = rank_sum_pos - n_pos(n_pos+1)/2; AUROC = U / (n_pos * n_neg).
  const int64_t twice_u = twice_rank_sum_pos - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::pair<double, double> aggregate(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate: empty input");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

double salience_entropy(const SaliencyMap& map) {
  if (map.numel() == 0) throw std::invalid_argument("salience_entropy: empty map");
  double sum = 0.0;
  float lo = map.values.front(), hi = lo;
  for (float v : map.values) {
    if (!(v >= 0.0f)) throw std::invalid_argument("salience_entropy: negative or NaN value");
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (sum <= 0.0) throw std::invalid_argument("salience_entropy: undefined for all-zero map");
  if (map.numel() == 1) return 0.0;  // single-outcome distribution
  if (lo == hi) return 1.0;          // constant map: maximal entropy, exactly

  double h = 0.0;
  for (float v : map.values) {
    if (v <= 0.0f) continue;
    const double p = v / sum;
    h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(map.numel()));
}

double mass_inside_gt_bbox(const SaliencyMap& predicted, const SaliencyMap& gt) {
  if (predicted.height != gt.height || predicted.width != gt.width)
    throw std::invalid_argument("mass_inside_gt_bbox: shape mismatch");
  if (gt.numel() == 0) throw std::invalid_argument("mass_inside_gt_bbox: empty map");

  int y0 = gt.height, y1 = -1, x0 = gt.width, x1 = -1;
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      const float v = gt.at(y, x);
      if (!(v >= 0.0f))
        throw std::invalid_argument("mass_inside_gt_bbox: negative or NaN ground-truth value");
      if (v > 0.0f) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
    }
  }
  if (y1 < 0)
    throw std::invalid_argument("mass_inside_gt_bbox: ground truth has no positive support");

  double total = 0.0;
  double inside = 0.0;
  for (int y = 0; y < predicted.height; ++y) {
    for (int x = 0; x < predicted.width; ++x) {
      const float v = predicted.at(y, x);
      if (!(v >= 0.0f))
        throw std::invalid_argument("mass_inside_gt_bbox: negative or NaN predicted value");
      total += v;
      if (y >= y0 && y <= y1 && x >= x0 && x <= x1) inside += v;
    }
  }
  if (total == 0.0) return 0.0;
  return inside / total;
}

}  // namespace sgt
