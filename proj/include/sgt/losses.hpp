#pragma once

// Loss functions for saliency-guided training.
//
// Four losses cover the whole experiment matrix:
//   - cross_entropy            : plain classification (ops.hpp already has it)
//   - salience_dissimilarity   : per-pixel distance between two map batches
//   - joint_loss               : alpha * classification + (1-alpha) * dissimilarity,
//                                the single-phase guided baselines
//   - saliency_pretrain_loss   : the label-free pretraining objective; squared
//                                L2 per sample, normalized per pixel so the
//                                magnitude is resolution-independent
//
// The joint loss short-circuits its endpoints: alpha == 1 returns the
// cross-entropy term itself and alpha == 0 the dissimilarity term, so the
// endpoint identities hold bit-for-bit (including gradients).

#include "sgt/ops.hpp"
#include "sgt/tensor.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace sgt {

enum class Dissimilarity { mse, l1 };

inline const char* to_string(Dissimilarity d) {
  return d == Dissimilarity::mse ? "mse" : "l1";
}

inline Dissimilarity dissimilarity_from_string(const std::string& s) {
  if (s == "mse") return Dissimilarity::mse;
  if (s == "l1") return Dissimilarity::l1;
  throw std::invalid_argument("dissimilarity: expected 'mse' or 'l1', got '" + s + "'");
}

// Loss selection for a training run.
struct LossConfig {
  double alpha = 0.5;  // joint kinds: weight on the classification term
  Dissimilarity dissimilarity = Dissimilarity::mse;
  bool per_pixel_mean = true;  // pretrain loss: divide by pixel count as well

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("LossConfig: alpha must lie in [0,1]");
  }
};

// Batch-mean per-pixel distance between predicted and human map batches,
// both [N,1,H,W] (any matching shapes accepted).
template <typename S>
TensorT<S> salience_dissimilarity(const TensorT<S>& predicted, const TensorT<S>& human,
                                  Dissimilarity d) {
  return d == Dissimilarity::mse ? mse_loss(predicted, human) : l1_loss(predicted, human);
}

// alpha-weighted sum of classification and human-salience terms. model_saliency
// is the model's own map batch: the true-class evidence map for CAM-guided
// runs, or the decoder output for reconstruction-guided runs.
template <typename S>
TensorT<S> joint_loss(const TensorT<S>& logits, const std::vector<int>& labels,
                      const TensorT<S>& model_saliency, const TensorT<S>& human_saliency,
                      double alpha, Dissimilarity d = Dissimilarity::mse) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("joint_loss: alpha must lie in [0,1]");
  if (alpha == 1.0) return cross_entropy(logits, labels);
  if (alpha == 0.0) return salience_dissimilarity(model_saliency, human_saliency, d);
  TensorT<S> ce = cross_entropy(logits, labels);
  TensorT<S> ds = salience_dissimilarity(model_saliency, human_saliency, d);
  return add(scale(ce, static_cast<S>(alpha)), scale(ds, static_cast<S>(1.0 - alpha)));
}

// Label-free pretraining objective: (1/K) * sum_k ||human_k - predicted_k||^2.
// With per_pixel_mean (the default) the squared norm is also divided by the
// pixel count, making it identical to the plain MSE dissimilarity; the raw
// variant keeps the unnormalized per-sample squared L2 norm.
template <typename S>
TensorT<S> saliency_pretrain_loss(const TensorT<S>& predicted, const TensorT<S>& human,
                                  bool per_pixel_mean = true) {
  if (predicted.shape() != human.shape())
    throw std::invalid_argument("saliency_pretrain_loss: shape mismatch " +
                                shape_to_string(predicted.shape()) + " vs " +
                                shape_to_string(human.shape()));
  if (predicted.rank() < 1 || predicted.dim(0) < 1)
    throw std::invalid_argument("saliency_pretrain_loss: need a batch dimension");
  TensorT<S> m = mse_loss(predicted, human);
  if (per_pixel_mean) return m;
  // mse averaged over K*P elements; the raw convention wants sum/K = mse * P.
  const std::int64_t pixels = predicted.size() / predicted.dim(0);
  return scale(m, static_cast<S>(pixels));
}

}  // namespace sgt
