#pragma once

#include <utility>
#include <vector>

#include "sgt/image.hpp"

namespace sgt {

struct ScoredSample {
  double score = 0.0;  // higher = more anomalous
  int label = 0;       // 0 or 1
};

// Mann-Whitney AUROC: (#concordant pairs + 0.5 * #tied pairs) / (#pos * #neg),
// computed via one sort with midrank tie handling. Exact up to the final
// division (pair counts are integer arithmetic). Throws
// std::invalid_argument on empty or single-class input or non-finite scores.
double auroc(const std::vector<ScoredSample>& samples);

// Arithmetic mean and sample standard deviation (n-1 denominator; 0 when
// n == 1). Throws on empty input.
std::pair<double, double> aggregate(const std::vector<double>& values);

// Normalized Shannon entropy of the map interpreted as a probability
// distribution (values / sum): H(p) / log(P) with P the pixel count.
// Constant positive map -> 1, one-hot map -> 0. Invariant under positive
// scaling. Throws std::invalid_argument on negative values or an all-zero
// map (undefined metric).
double salience_entropy(const SaliencyMap& map);

// Fraction of predicted saliency mass that falls inside the tight bounding
// box of the positive support of `gt` (a localization score in [0,1]). Both
// maps must share shape and be nonnegative; `gt` must have positive support.
// An all-zero prediction has no mass anywhere, so the fraction is 0.
double mass_inside_gt_bbox(const SaliencyMap& predicted, const SaliencyMap& gt);

}  // namespace sgt
