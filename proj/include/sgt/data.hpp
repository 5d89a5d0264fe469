#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sgt/image.hpp"
#include "sgt/tensor.hpp"

namespace sgt {

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// One corpus element. Labels are optional (step-1 pretraining never reads
// them); saliency is optional (plain classification corpora have none).
struct Sample {
  GrayImage image;
  std::optional<int> label;  // 0 = normal, 1 = anomalous
  std::optional<SaliencyMap> saliency;
  std::string subject_id;
  Split split = Split::train;
};

struct SampleSet {
  std::vector<Sample> samples;

  std::vector<int> indices_of(Split s) const;
  int count_of(Split s) const;
};

struct SyntheticTaskSpec {
  int extent = 32;
  int n_train = 600;
  int n_val = 150;
  int n_test = 800;
  std::vector<std::string> known_anomaly_kinds = {"blob", "stripe"};
  std::vector<std::string> unknown_anomaly_kinds = {"ring", "checker"};
  double spurious_cue_strength = 0.9;  // P(train anomaly carries the corner cue)
  double noise_sigma = 0.05;
  uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

// Multi-annotator fusion. Throws on empty input or shape mismatch.
SaliencyMap fuse_annotations_mean(const std::vector<SaliencyMap>& maps);
SaliencyMap fuse_annotations_max(const std::vector<SaliencyMap>& maps);

// Procedural anomaly task with exact ground-truth saliency.
//
// Normal images: a smooth random background plus a fixed sinusoidal texture
// plus pixel noise. Anomalous images additionally contain one localized
// defect (blob / stripe / ring / checker patch) at a random position; the
// ground-truth saliency is the defect's support mask blurred twice with a
// 3x3 box filter and peak-normalized to max 1. Normal samples carry an
// all-zero map.
//
// Split recipe baked into the generator:
//   train: known kinds; each anomaly carries a bright 3x3 top-left corner
//          cue with probability spurious_cue_strength (a shortcut feature);
//   val:   known kinds, never cued — models that lean on the shortcut do
//          not validate well;
//   test:  unknown kinds only, never cued (open-set shift).
// Class balance is 1 normal : 2 anomalous in every split.
//
// Deterministic: the result is a pure function of the spec.
SampleSet generate_synthetic_task(const SyntheticTaskSpec& spec);

// Re-splits samples by subject: every subject's samples land in exactly one
// of train/val/test. `ratios` holds the three subject fractions and must sum
// to 1. Throws if there are fewer subjects than nonempty splits require.
SampleSet split_subject_disjoint(const std::vector<Sample>& samples,
                                 const std::vector<double>& ratios, uint64_t seed);

// Throws std::logic_error if any subject_id appears in more than one split.
void check_subject_disjoint(const SampleSet& set);

// On-disk corpus layout: <dir>/images/*.pgm, <dir>/saliency/*.pgm and a
// JSON-lines manifest with one record per sample:
//   {"image_path": ..., "label": int|null, "subject_id": ..., "split": ...,
//    "saliency_paths": [...], "annotator_correct": [...], "fusion": "mean"|"max"}
// Paths are relative to the manifest's directory.
void write_corpus(const std::string& dir, const SampleSet& set, const std::string& fusion);

// Loads a manifest, dropping annotations whose annotator_correct flag is
// false, fusing the survivors per the record's fusion rule, and min-max
// stretching the fused map to [0,1]. A record whose annotations are all
// incorrect yields a sample without saliency.
SampleSet load_corpus(const std::string& manifest_path);

// Batch assembly for training loops: stacks the picked samples into
// [N,1,H,W] tensors (and a label vector). Throws if a picked sample lacks
// the requested field.
Tensor batch_images(const SampleSet& set, const std::vector<int>& indices);
Tensor batch_saliency(const SampleSet& set, const std::vector<int>& indices);
std::vector<int> batch_labels(const SampleSet& set, const std::vector<int>& indices);

}  // namespace sgt
