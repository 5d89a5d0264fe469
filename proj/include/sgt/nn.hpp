#pragma once

// Model definitions: a small convolutional encoder, a mirrored decoder with
// optional skip connections (saliency autoencoder), and a global-average-pool
// linear classifier head. The autoencoder regresses per-pixel saliency in
// [0,1]; the classifier reuses the encoder for binary anomaly detection.
//
// Construction is fully deterministic: all initial weights are drawn from an
// Rng seeded by the caller, in a fixed order.

#include "sgt/ops.hpp"
#include "sgt/rng.hpp"
#include "sgt/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sgt {

// Architecture hyperparameters shared by all models in one experiment.
struct ModelSpec {
  int in_channels = 1;
  int input_extent = 32;       // square inputs
  int base_width = 8;          // channels of the first encoder stage
  int depth = 3;               // number of conv+pool stages
  int num_classes = 2;
  bool skip_connections = true;
  std::string skip_style = "direct";  // reserved for richer skip wiring

  void validate() const {
    if (in_channels < 1) throw std::invalid_argument("ModelSpec: in_channels must be >= 1");
    if (base_width < 1) throw std::invalid_argument("ModelSpec: base_width must be >= 1");
    if (depth < 1) throw std::invalid_argument("ModelSpec: depth must be >= 1");
    if (num_classes < 2) throw std::invalid_argument("ModelSpec: num_classes must be >= 2");
    if (input_extent < 1) throw std::invalid_argument("ModelSpec: input_extent must be >= 1");
    const int div = 1 << depth;
    if (input_extent % div != 0)
      throw std::invalid_argument("ModelSpec: input_extent " + std::to_string(input_extent) +
                                  " is not divisible by 2^depth = " + std::to_string(div));
    if (input_extent / div < 1)
      throw std::invalid_argument("ModelSpec: depth too large for extent");
  }

  int stage_channels(int stage) const { return base_width << stage; }
  int bottleneck_channels() const { return stage_channels(depth - 1); }
  int bottleneck_extent() const { return input_extent >> depth; }
};

namespace detail {

// Uniform(-bound, bound) fill, drawn in flat row-major order.
template <typename S>
inline TensorT<S> uniform_init(Shape shape, double bound, Rng& rng) {
  TensorT<S> t = TensorT<S>::zeros(std::move(shape), /*requires_grad=*/true);
  for (auto& v : t.mutable_data()) v = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace detail

// One 3x3 conv layer with bias.
template <typename S>
struct ConvLayerT {
  TensorT<S> kernel;  // [out,in,3,3]
  TensorT<S> bias;    // [out]

  static ConvLayerT init(int out_ch, int in_ch, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch) * 9.0);
    ConvLayerT l;
    l.kernel = detail::uniform_init<S>({out_ch, in_ch, 3, 3}, bound, rng);
    l.bias = TensorT<S>::zeros({out_ch}, /*requires_grad=*/true);
    return l;
  }

  TensorT<S> apply(const TensorT<S>& x) const {
    return add_channel_bias(conv2d(x, kernel, /*stride=*/1, /*padding=*/1), bias);
  }
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;
template <typename S>
using NamedParamsT = std::vector<std::pair<std::string, TensorT<S>>>;

// Convolutional feature extractor: `depth` stages of conv3x3 + relu +
// maxpool2x, doubling channels per stage. Halves the spatial extent per
// stage, so extent must be divisible by 2^depth.
template <typename S>
class EncoderNetT {
 public:
  EncoderNetT() = default;

  EncoderNetT(const ModelSpec& spec, Rng& rng) : spec_(spec) {
    spec.validate();
    int in_ch = spec.in_channels;
    for (int i = 0; i < spec.depth; ++i) {
      const int out_ch = spec.stage_channels(i);
      stages_.push_back(ConvLayerT<S>::init(out_ch, in_ch, rng));
      in_ch = out_ch;
    }
  }

  // Returns the bottleneck features [N, C_last, e, e]. When `pre_pool` is
  // given, it receives each stage's activation before pooling — the skip
  // inputs for a mirrored decoder.
  TensorT<S> forward(const TensorT<S>& images,
                     std::vector<TensorT<S>>* pre_pool = nullptr) const {
    if (images.rank() != 4 || images.dim(1) != spec_.in_channels ||
        images.dim(2) != spec_.input_extent || images.dim(3) != spec_.input_extent)
      throw std::invalid_argument("EncoderNet: expected [N," +
                                  std::to_string(spec_.in_channels) + "," +
                                  std::to_string(spec_.input_extent) + "," +
                                  std::to_string(spec_.input_extent) + "], got " +
                                  shape_to_string(images.shape()));
    if (pre_pool) pre_pool->clear();
    TensorT<S> x = images;
    for (const auto& stage : stages_) {
      TensorT<S> a = relu(stage.apply(x));
      if (pre_pool) pre_pool->push_back(a);
      x = maxpool2x(a);
    }
    return x;
  }

  NamedParamsT<S> named_parameters() const {
    NamedParamsT<S> out;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      out.emplace_back("encoder.stage" + std::to_string(i) + ".kernel", stages_[i].kernel);
      out.emplace_back("encoder.stage" + std::to_string(i) + ".bias", stages_[i].bias);
    }
    return out;
  }

  // Deep copy: fresh leaf tensors with bit-identical values.
  EncoderNetT clone() const {
    EncoderNetT e;
    e.spec_ = spec_;
    for (const auto& s : stages_)
      e.stages_.push_back(ConvLayerT<S>{s.kernel.copy(true), s.bias.copy(true)});
    return e;
  }

  const ModelSpec& spec() const { return spec_; }
  int stage_count() const { return static_cast<int>(stages_.size()); }
  const ConvLayerT<S>& stage(int i) const { return stages_.at(static_cast<std::size_t>(i)); }
  ConvLayerT<S>& stage(int i) { return stages_.at(static_cast<std::size_t>(i)); }

 private:
  ModelSpec spec_;
  std::vector<ConvLayerT<S>> stages_;
};

// Mirror of the encoder: upsample + (optional skip concat) + conv3x3 + relu
// per stage, then a 1x1 conv head squashed with sigmoid to a one-channel map
// in [0,1] at input resolution.
template <typename S>
class DecoderNetT {
 public:
  DecoderNetT() = default;

  DecoderNetT(const ModelSpec& spec, Rng& rng) : spec_(spec) {
    spec.validate();
    int in_ch = spec.bottleneck_channels();
    for (int i = spec.depth - 1; i >= 0; --i) {
      // After upsampling to stage i's resolution, optionally concat that
      // stage's pre-pool activation (stage_channels(i) wide).
      const int skip_ch = spec.skip_connections ? spec.stage_channels(i) : 0;
      const int out_ch = std::max(1, spec.stage_channels(i) / 2);
      stages_.push_back(ConvLayerT<S>::init(out_ch, in_ch + skip_ch, rng));
      in_ch = out_ch;
    }
    // Detector-style head init: near-zero weights plus a bias that puts the
    // initial sigmoid output at a low base rate. Saliency targets are mostly
    // zero, and a conventionally scaled head lets the early background
    // correction shove the (feature-rich) salient pixels deepest into the
    // sigmoid tail, where the gradient dies and the map collapses to zero.
    head_kernel_ = detail::uniform_init<S>({1, in_ch, 1, 1}, 0.01, rng);
    head_bias_ = TensorT<S>::zeros({1}, /*requires_grad=*/true);
    head_bias_.mutable_data()[0] = static_cast<S>(-std::log(19.0));  // sigmoid -> 0.05
  }

  // bottleneck: encoder output; skips: encoder pre-pool activations (stage
  // order), required iff the spec enables skip connections.
  TensorT<S> forward(const TensorT<S>& bottleneck,
                     const std::vector<TensorT<S>>& skips) const {
    if (spec_.skip_connections &&
        static_cast<int>(skips.size()) != spec_.depth)
      throw std::invalid_argument("DecoderNet: expected " + std::to_string(spec_.depth) +
                                  " skip tensors, got " + std::to_string(skips.size()));
    TensorT<S> x = bottleneck;
    for (int s = 0; s < spec_.depth; ++s) {
      const int enc_stage = spec_.depth - 1 - s;
      x = upsample_nearest2x(x);
      if (spec_.skip_connections)
        x = concat_channels(x, skips[static_cast<std::size_t>(enc_stage)]);
      x = relu(stages_[static_cast<std::size_t>(s)].apply(x));
    }
    return sigmoid(add_channel_bias(conv2d(x, head_kernel_, 1, 0), head_bias_));
  }

  NamedParamsT<S> named_parameters() const {
    NamedParamsT<S> out;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      out.emplace_back("decoder.stage" + std::to_string(i) + ".kernel", stages_[i].kernel);
      out.emplace_back("decoder.stage" + std::to_string(i) + ".bias", stages_[i].bias);
    }
    out.emplace_back("decoder.head.kernel", head_kernel_);
    out.emplace_back("decoder.head.bias", head_bias_);
    return out;
  }

  const ModelSpec& spec() const { return spec_; }

 private:
  ModelSpec spec_;
  std::vector<ConvLayerT<S>> stages_;
  TensorT<S> head_kernel_, head_bias_;
};

// Saliency autoencoder: encoder + decoder trained to regress human maps.
template <typename S>
struct AutoencoderT {
  EncoderNetT<S> encoder;
  DecoderNetT<S> decoder;

  // images [N,C,H,W] -> predicted saliency [N,1,H,W] in [0,1].
  TensorT<S> forward_saliency(const TensorT<S>& images) const {
    std::vector<TensorT<S>> skips;
    TensorT<S> bottleneck = encoder.forward(images, &skips);
    return decoder.forward(bottleneck, skips);
  }

  NamedParamsT<S> named_parameters() const {
    NamedParamsT<S> out = encoder.named_parameters();
    for (auto& p : decoder.named_parameters()) out.push_back(std::move(p));
    return out;
  }
};

// Global-average-pool + linear classification head.
template <typename S>
class ClassifierHeadT {
 public:
  ClassifierHeadT() = default;

  ClassifierHeadT(int feature_dim, int num_classes, Rng& rng) {
    // Seeded uniform +-1/sqrt(D).
    const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    weight_ = detail::uniform_init<S>({feature_dim, num_classes}, bound, rng);
    bias_ = TensorT<S>::zeros({num_classes}, /*requires_grad=*/true);
  }

  // features [N,D] -> logits [N,M].
  TensorT<S> forward(const TensorT<S>& features) const {
    return linear(features, weight_, bias_);
  }

  const TensorT<S>& weight() const { return weight_; }
  const TensorT<S>& bias() const { return bias_; }

  NamedParamsT<S> named_parameters() const {
    return {{"head.weight", weight_}, {"head.bias", bias_}};
  }

 private:
  TensorT<S> weight_;  // [D, M]
  TensorT<S> bias_;    // [M]
};

// Encoder + GAP + linear head. The canonical classification model for both
// the fine-tuning phase and the single-phase baselines.
template <typename S>
struct ClassifierT {
  EncoderNetT<S> encoder;
  ClassifierHeadT<S> head;

  // images -> logits [N, num_classes]. When `bottleneck_out` is non-null it
  // receives the pre-pool feature maps of the last stage's output — i.e. the
  // encoder bottleneck — for class-evidence map construction.
  TensorT<S> forward(const TensorT<S>& images,
                     TensorT<S>* bottleneck_out = nullptr) const {
    TensorT<S> features = encoder.forward(images);
    if (bottleneck_out) *bottleneck_out = features;
    return head.forward(global_avg_pool(features));
  }

  NamedParamsT<S> named_parameters() const {
    NamedParamsT<S> out = encoder.named_parameters();
    for (auto& p : head.named_parameters()) out.push_back(std::move(p));
    return out;
  }
};

// Fresh autoencoder with all parameters drawn from `seed`.
template <typename S = float>
AutoencoderT<S> build_autoencoder(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  AutoencoderT<S> ae;
  ae.encoder = EncoderNetT<S>(spec, rng);
  ae.decoder = DecoderNetT<S>(spec, rng);
  return ae;
}

// Classifier whose encoder parameters are a bit-identical copy of `encoder`
// (the Step 1 -> Step 2 handoff: nothing is lost, nothing is frozen) and
// whose head is freshly initialized from `head_seed`.
template <typename S>
ClassifierT<S> build_classifier(const EncoderNetT<S>& encoder, int num_classes,
                                std::uint64_t head_seed) {
  if (num_classes < 2) throw std::invalid_argument("build_classifier: num_classes must be >= 2");
  ClassifierT<S> c;
  c.encoder = encoder.clone();
  Rng rng(head_seed);
  c.head = ClassifierHeadT<S>(encoder.spec().bottleneck_channels(), num_classes, rng);
  return c;
}

// Classifier with a randomly initialized encoder (the from-scratch baseline).
template <typename S = float>
ClassifierT<S> build_classifier_random(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ClassifierT<S> c;
  c.encoder = EncoderNetT<S>(spec, rng);
  c.head = ClassifierHeadT<S>(spec.bottleneck_channels(), spec.num_classes, rng);
  return c;
}

// Differentiable class-evidence map at input resolution: weights the last
// feature maps by the head's weights for each sample's class, rectifies,
// upsamples back to the input extent, and min-max normalizes per sample.
// Degenerate (constant) maps normalize to all-zeros.
template <typename S>
TensorT<S> class_evidence_map(const ClassifierT<S>& model, const TensorT<S>& bottleneck,
                              const std::vector<int>& class_index) {
  TensorT<S> cam = relu(cam_weighted_sum(bottleneck, model.head.weight(), class_index));
  for (int i = 0; i < model.encoder.spec().depth; ++i) cam = upsample_nearest2x(cam);
  return minmax_normalize_per_sample(cam);
}

using Encoder = EncoderNetT<float>;
using Decoder = DecoderNetT<float>;
using Autoencoder = AutoencoderT<float>;
using Classifier = ClassifierT<float>;
using ClassifierHead = ClassifierHeadT<float>;

// Total parameter count for a full autoencoder + classifier family built
// from `spec`; used to verify size sweeps grow the model.
inline std::int64_t parameter_count(const ModelSpec& spec) {
  spec.validate();
  std::int64_t n = 0;
  int in_ch = spec.in_channels;
  for (int i = 0; i < spec.depth; ++i) {
    const int out_ch = spec.stage_channels(i);
    n += static_cast<std::int64_t>(out_ch) * in_ch * 9 + out_ch;
    in_ch = out_ch;
  }
  int dec_in = spec.bottleneck_channels();
  for (int i = spec.depth - 1; i >= 0; --i) {
    const int skip_ch = spec.skip_connections ? spec.stage_channels(i) : 0;
    const int out_ch = std::max(1, spec.stage_channels(i) / 2);
    n += static_cast<std::int64_t>(out_ch) * (dec_in + skip_ch) * 9 + out_ch;
    dec_in = out_ch;
  }
  n += dec_in + 1;  // decoder 1x1 head
  n += static_cast<std::int64_t>(spec.bottleneck_channels()) * spec.num_classes + spec.num_classes;
  return n;
}

}  // namespace sgt
