#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sgt/checkpoint.hpp"
#include "sgt/config.hpp"
#include "sgt/data.hpp"

namespace sgt {

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

// Everything one training run produces besides its checkpoints. Metrics are
// measured on the best-validation-loss snapshot, never the final epoch.
struct RunReport {
  std::string phase;  // "step1" | "step2" | "xent" | "joint_cam" | "joint_gaze"
  uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  double test_auroc = std::numeric_limits<double>::quiet_NaN();
  double test_entropy_mean = std::numeric_limits<double>::quiet_NaN();
  double test_entropy_std = std::numeric_limits<double>::quiet_NaN();
  bool encoder_grad_nonzero_first_batch = false;
  double wall_seconds = 0.0;
  std::string checkpoint_path;

  json to_json() const;
  // Same document minus wall_seconds and checkpoint_path, so two runs of the
  // same work compare equal byte for byte.
  json deterministic_json() const;
};

struct Step1Result {
  RunReport report;
  Checkpoint best_autoencoder;  // full model at the best validation epoch
  Checkpoint best_encoder;      // its encoder subset (the Step 2 handoff)
};

struct TrainResult {
  RunReport report;
  Checkpoint best;  // kind "classifier"
};

// Phase 1: saliency autoencoding with AdamW. Reads images and saliency maps
// only — labels are never touched. Requires every train and val sample to
// carry a saliency map (checked before training starts).
Step1Result train_step1(Autoencoder model, const SampleSet& data, const TrainConfig& cfg);

// Phase 2: attach a fresh head to the checkpointed encoder (bit-exact
// carry-over, nothing frozen) and fine-tune everything with cross-entropy
// under the stepped SGD schedule. Test AUROC and class-evidence-map entropy
// come from the best-val snapshot.
TrainResult train_step2(const Checkpoint& encoder_ckpt, const SampleSet& data,
                        const TrainConfig& cfg);

enum class BaselineKind { xent, joint_cam, joint_gaze };
const char* to_string(BaselineKind kind);
BaselineKind baseline_kind_from_string(const std::string& s);

// Single-phase baselines sharing Step 2's optimizer family:
//   xent       - plain cross-entropy;
//   joint_cam  - alpha*CE + (1-alpha)*dissimilarity(class evidence map, human);
//   joint_gaze - alpha*CE + (1-alpha)*dissimilarity(decoder output, human),
//                decoder, encoder, and head trained jointly.
// `init_encoder` switches the encoder start from random to a checkpoint.
TrainResult train_baseline(BaselineKind kind, const SampleSet& data, const ModelSpec& spec,
                           const TrainConfig& cfg, const Checkpoint* init_encoder = nullptr);

// Predicted maps for images that have no human annotation (teacher-student
// reuse of a trained phase-1 model). Input [N,1,H,W]; one map per image.
std::vector<SaliencyMap> generate_saliency_for_unlabeled(const Autoencoder& model,
                                                         const Tensor& images);

struct ClassifierEval {
  double auroc = std::numeric_limits<double>::quiet_NaN();
  double entropy_mean = std::numeric_limits<double>::quiet_NaN();
  double entropy_std = std::numeric_limits<double>::quiet_NaN();
};

// AUROC of the anomalous-class softmax probability plus the mean/std of the
// class-evidence-map entropy over the split. Each map's entropy uses the
// anomaly class; an all-zero (degenerate) map counts as entropy 1.
ClassifierEval evaluate_classifier(const Classifier& model, const SampleSet& data, Split split,
                                   int batch_size);

// Mean per-sample saliency regression loss over a split (phase-1 objective).
double evaluate_saliency_loss(const Autoencoder& model, const SampleSet& data, Split split,
                              int batch_size);

struct CellResult {
  std::string strategy;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunReport report;                          // classification-phase report
  std::optional<RunReport> step1_report;     // two_phase only
  std::optional<Checkpoint> model_checkpoint;
  std::optional<Checkpoint> encoder_checkpoint;  // two_phase: phase-1 best encoder
};

struct ExperimentResult {
  std::vector<CellResult> cells;  // strategy-major, seed-minor, config order
  json aggregate;                 // per-strategy metric report + failures
  std::string metrics_csv;        // byte-deterministic across reruns
  std::string table;              // fixed-format summary for stdout
  bool any_failed = false;
};

// Runs the full strategy x seed matrix. Cells are independent and may run on
// up to `jobs` threads; outputs are assembled in deterministic config order
// afterwards, so the results do not depend on scheduling.
ExperimentResult run_experiment(const Config& cfg, const SampleSet& data, int jobs);

}  // namespace sgt
