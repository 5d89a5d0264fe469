#include "sgt/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace sgt {

namespace {

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw std::runtime_error("config: '" + section + "' must be a JSON object");
  }
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) {
      throw std::runtime_error("config: unknown key '" + section + "." + key + "'");
    }
  }
}

template <typename T>
void pick(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void SgdSchedule::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("sgd.lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("sgd.momentum must lie in [0,1)");
  if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("sgd.gamma must lie in (0,1]");
  if (step_epochs < 1) throw std::invalid_argument("sgd.step_epochs must be >= 1");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("train.max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("train.patience must be >= 1");
  if (adamw.lr <= 0.0) throw std::invalid_argument("train.adamw.lr must be > 0");
  sgd.validate();
  loss.validate();
}

void ExperimentConfig::validate() const {
  if (strategies.empty()) throw std::invalid_argument("experiment.strategies must be nonempty");
  if (seeds.empty()) throw std::invalid_argument("experiment.seeds must be nonempty");
  const std::set<std::string> known = {"two_phase", "xent", "joint_cam", "joint_gaze"};
  for (const auto& s : strategies) {
    if (!known.count(s)) {
      throw std::invalid_argument("experiment.strategies: unknown strategy '" + s +
                                  "' (expected two_phase|xent|joint_cam|joint_gaze)");
    }
  }
}

void Config::validate() const {
  model.validate();
  task.validate();
  train.validate();
  experiment.validate();
  if (task.extent != model.input_extent) {
    throw std::invalid_argument("config: task.extent must equal model.input_extent");
  }
}

json model_spec_to_json(const ModelSpec& spec) {
  return json{{"in_channels", spec.in_channels},
              {"input_extent", spec.input_extent},
              {"base_width", spec.base_width},
              {"depth", spec.depth},
              {"num_classes", spec.num_classes},
              {"skip_connections", spec.skip_connections},
              {"skip_style", spec.skip_style}};
}

ModelSpec model_spec_from_json(const json& j) {
  check_keys(j, "model",
             {"in_channels", "input_extent", "base_width", "depth", "num_classes",
              "skip_connections", "skip_style"});
  ModelSpec spec;
  pick(j, "in_channels", spec.in_channels);
  pick(j, "input_extent", spec.input_extent);
  pick(j, "base_width", spec.base_width);
  pick(j, "depth", spec.depth);
  pick(j, "num_classes", spec.num_classes);
  pick(j, "skip_connections", spec.skip_connections);
  pick(j, "skip_style", spec.skip_style);
  return spec;
}

namespace {

json task_spec_to_json(const SyntheticTaskSpec& t) {
  return json{{"extent", t.extent},
              {"n_train", t.n_train},
              {"n_val", t.n_val},
              {"n_test", t.n_test},
              {"known_anomaly_kinds", t.known_anomaly_kinds},
              {"unknown_anomaly_kinds", t.unknown_anomaly_kinds},
              {"spurious_cue_strength", t.spurious_cue_strength},
              {"noise_sigma", t.noise_sigma},
              {"seed", t.seed}};
}

SyntheticTaskSpec task_spec_from_json(const json& j) {
  check_keys(j, "task",
             {"extent", "n_train", "n_val", "n_test", "known_anomaly_kinds",
              "unknown_anomaly_kinds", "spurious_cue_strength", "noise_sigma", "seed"});
  SyntheticTaskSpec t;
  pick(j, "extent", t.extent);
  pick(j, "n_train", t.n_train);
  pick(j, "n_val", t.n_val);
  pick(j, "n_test", t.n_test);
  pick(j, "known_anomaly_kinds", t.known_anomaly_kinds);
  pick(j, "unknown_anomaly_kinds", t.unknown_anomaly_kinds);
  pick(j, "spurious_cue_strength", t.spurious_cue_strength);
  pick(j, "noise_sigma", t.noise_sigma);
  pick(j, "seed", t.seed);
  return t;
}

json train_to_json(const TrainConfig& t) {
  return json{{"seed", t.seed},
              {"batch_size", t.batch_size},
              {"max_epochs", t.max_epochs},
              {"patience", t.patience},
              {"adamw",
               {{"lr", t.adamw.lr},
                {"beta1", t.adamw.beta1},
                {"beta2", t.adamw.beta2},
                {"weight_decay", t.adamw.weight_decay},
                {"eps", t.adamw.eps}}},
              {"sgd",
               {{"lr", t.sgd.lr},
                {"momentum", t.sgd.momentum},
                {"gamma", t.sgd.gamma},
                {"step_epochs", t.sgd.step_epochs}}},
              {"loss",
               {{"alpha", t.loss.alpha}, {"dissimilarity", to_string(t.loss.dissimilarity)}}}};
}

TrainConfig train_from_json(const json& j) {
  check_keys(j, "train", {"seed", "batch_size", "max_epochs", "patience", "adamw", "sgd", "loss"});
  TrainConfig t;
  pick(j, "seed", t.seed);
  pick(j, "batch_size", t.batch_size);
  pick(j, "max_epochs", t.max_epochs);
  pick(j, "patience", t.patience);
  if (j.contains("adamw")) {
    const json& a = j.at("adamw");
    check_keys(a, "train.adamw", {"lr", "beta1", "beta2", "weight_decay", "eps"});
    pick(a, "lr", t.adamw.lr);
    pick(a, "beta1", t.adamw.beta1);
    pick(a, "beta2", t.adamw.beta2);
    pick(a, "weight_decay", t.adamw.weight_decay);
    pick(a, "eps", t.adamw.eps);
  }
  if (j.contains("sgd")) {
    const json& s = j.at("sgd");
    check_keys(s, "train.sgd", {"lr", "momentum", "gamma", "step_epochs"});
    pick(s, "lr", t.sgd.lr);
    pick(s, "momentum", t.sgd.momentum);
    pick(s, "gamma", t.sgd.gamma);
    pick(s, "step_epochs", t.sgd.step_epochs);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, "train.loss", {"alpha", "dissimilarity"});
    pick(l, "alpha", t.loss.alpha);
    if (l.contains("dissimilarity")) {
      t.loss.dissimilarity = dissimilarity_from_string(l.at("dissimilarity").get<std::string>());
    }
  }
  return t;
}

json experiment_to_json(const ExperimentConfig& e) {
  return json{{"strategies", e.strategies}, {"seeds", e.seeds}};
}

ExperimentConfig experiment_from_json(const json& j) {
  check_keys(j, "experiment", {"strategies", "seeds"});
  ExperimentConfig e;
  pick(j, "strategies", e.strategies);
  pick(j, "seeds", e.seeds);
  return e;
}

}  // namespace

json config_to_json(const Config& cfg) {
  return json{{"model", model_spec_to_json(cfg.model)},
              {"task", task_spec_to_json(cfg.task)},
              {"train", train_to_json(cfg.train)},
              {"experiment", experiment_to_json(cfg.experiment)}};
}

Config config_from_json(const json& doc) {
  check_keys(doc, "<root>", {"model", "task", "train", "experiment"});
  Config cfg;
  try {
    if (doc.contains("model")) cfg.model = model_spec_from_json(doc.at("model"));
    if (doc.contains("task")) cfg.task = task_spec_from_json(doc.at("task"));
    if (doc.contains("train")) cfg.train = train_from_json(doc.at("train"));
    if (doc.contains("experiment")) cfg.experiment = experiment_from_json(doc.at("experiment"));
    cfg.validate();
  } catch (const std::runtime_error&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  return cfg;
}

Config load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::runtime_error("override '" + assignment + "' is not of the form dotted.key=value");
  }
  const std::string dotted = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    parts.push_back(dotted.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (const auto& p : parts) {
    if (p.empty()) throw std::runtime_error("override '" + assignment + "' has an empty path segment");
  }

  json* cur = &doc;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!cur->is_object() || !cur->contains(parts[i])) {
      throw std::runtime_error("override: no such config section '" + parts[i] + "' in '" + dotted + "'");
    }
    cur = &(*cur)[parts[i]];
  }
  if (!cur->is_object() || !cur->contains(parts.back())) {
    throw std::runtime_error("override: no such config key '" + dotted + "'");
  }

  json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
  (*cur)[parts.back()] = parsed.is_discarded() ? json(value) : parsed;
}

}  // namespace sgt
