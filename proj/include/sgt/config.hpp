#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgt/data.hpp"
#include "sgt/losses.hpp"
#include "sgt/nn.hpp"
#include "sgt/optim.hpp"

namespace sgt {

using json = nlohmann::ordered_json;

// Step-2 / baseline optimizer family: SGD with a stepped learning rate.
struct SgdSchedule {
  double lr = 0.005;
  double momentum = 0.9;
  double gamma = 0.1;
  int step_epochs = 12;

  void validate() const;
  double lr_at(int epoch) const { return step_lr(lr, gamma, step_epochs, epoch); }
};

struct TrainConfig {
  uint64_t seed = 1;
  int batch_size = 8;
  int max_epochs = 50;
  int patience = 10;  // early exit after this many epochs without val improvement
  AdamW::Config adamw;  // pretraining family
  SgdSchedule sgd;      // classification family
  LossConfig loss;      // joint-baseline mixing

  void validate() const;
};

struct ExperimentConfig {
  std::vector<std::string> strategies = {"two_phase", "xent", "joint_cam", "joint_gaze"};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};

  void validate() const;
};

// The one JSON document every verb consumes. Absent keys keep defaults;
// unknown keys are configuration errors.
struct Config {
  ModelSpec model;
  SyntheticTaskSpec task;
  TrainConfig train;
  ExperimentConfig experiment;

  void validate() const;
};

json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const json& j);

json config_to_json(const Config& cfg);
Config config_from_json(const json& doc);

// Parses the file and materializes a Config. Malformed JSON, unknown keys,
// and invalid values all throw std::runtime_error with a diagnostic.
Config load_config_file(const std::string& path);

// Applies "dotted.key=value" onto an existing JSON document. The full dotted
// path must already exist in the document (overriding never invents fields).
// The value text is parsed as JSON when possible, else taken as a string.
void apply_override(json& doc, const std::string& assignment);

}  // namespace sgt
