// CLI dispatch for the `sgt` binary. Exit-code contract: 0 success, 1 the
// requested work failed while running, 2 configuration or usage errors.
// Every verb that produces an output directory writes into `<out>.staging`
// and renames on success, so failures never leave partial results behind.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgt/checkpoint.hpp"
#include "sgt/config.hpp"
#include "sgt/data.hpp"
#include "sgt/metrics.hpp"
#include "sgt/pgm.hpp"
#include "sgt/train.hpp"

namespace fs = std::filesystem;

namespace sgt {
namespace {

// Mirrors the project() version in the top-level CMakeLists.
constexpr const char* kToolVersion = "sgtrain 0.1.0";

// Thrown for problems the user must fix (bad flags, bad config, bad inputs);
// mapped to exit code 2. Everything else escaping a verb maps to exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOpts {
  std::string config_path;
  std::string out;
  int jobs = 1;
  std::vector<std::string> overrides;
};

struct Materialized {
  json doc;    // default-merged effective config document
  Config cfg;  // validated counterpart
};

// Defaults <- config file <- overrides, then validate the merged document.
// Any failure here is the user's to fix.
Materialized materialize(const CommonOpts& o) {
  try {
    json doc = o.config_path.empty() ? config_to_json(Config{})
                                     : config_to_json(load_config_file(o.config_path));
    for (const auto& ov : o.overrides) apply_override(doc, ov);
    return Materialized{doc, config_from_json(doc)};
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

Checkpoint load_checkpoint_arg(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

// All-or-nothing output directory: work lands in `<final>.staging`, commit()
// renames it into place, and an uncommitted stage is removed on unwind.
class StageDir {
 public:
  explicit StageDir(const std::string& final_path) : final_(final_path) {
    if (final_path.empty()) throw UsageError("--out is required for this command");
    if (fs::exists(final_)) {
      throw UsageError("output directory '" + final_path + "' already exists");
    }
    stage_ = final_;
    stage_ += ".staging";
    fs::remove_all(stage_);
    fs::create_directories(stage_);
  }

  StageDir(const StageDir&) = delete;
  StageDir& operator=(const StageDir&) = delete;

  ~StageDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(stage_, ec);
    }
  }

  const fs::path& path() const { return stage_; }

  void commit() {
    fs::rename(stage_, final_);
    committed_ = true;
  }

 private:
  fs::path final_, stage_;
  bool committed_ = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

// Provenance contract: every output directory carries the effective config,
// the seeds involved, and the tool version that produced it.
void write_provenance(const fs::path& dir, const json& doc, const std::string& verb,
                      const std::vector<uint64_t>& seeds) {
  write_text(dir / "effective_config.json", doc.dump(2) + "\n");
  json prov{{"tool_version", kToolVersion}, {"verb", verb}, {"seeds", seeds}};
  write_text(dir / "provenance.json", prov.dump(2) + "\n");
}

SaliencyMap tensor_row_to_map(const Tensor& maps, int row, int extent) {
  SaliencyMap m(extent, extent);
  const auto& v = maps.data();
  const std::size_t pixels = static_cast<std::size_t>(extent) * extent;
  std::copy(v.begin() + static_cast<std::ptrdiff_t>(row * pixels),
            v.begin() + static_cast<std::ptrdiff_t>((row + 1) * pixels), m.values.begin());
  return m;
}

// Mean fraction of predicted mass inside the ground-truth defect box over the
// annotated anomalous samples of a split.
double mean_mass_inside_bbox(const Autoencoder& model, const SampleSet& data, Split split,
                             int batch_size) {
  std::vector<int> picked;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    if (s.split == split && s.label && *s.label == 1 && s.saliency) {
      picked.push_back(static_cast<int>(i));
    }
  }
  if (picked.empty()) throw std::runtime_error("split has no annotated anomalous samples");
  double acc = 0.0;
  for (std::size_t at = 0; at < picked.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(picked.size(), at + static_cast<std::size_t>(batch_size));
    const std::vector<int> chunk(picked.begin() + static_cast<std::ptrdiff_t>(at),
                                 picked.begin() + static_cast<std::ptrdiff_t>(end));
    const auto maps = generate_saliency_for_unlabeled(model, batch_images(data, chunk));
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      acc += mass_inside_gt_bbox(maps[j], *data.samples[static_cast<std::size_t>(chunk[j])].saliency);
    }
  }
  return acc / static_cast<double>(picked.size());
}

int cmd_gen_data(const CommonOpts& o) {
  auto [doc, cfg] = materialize(o);
  StageDir stage(o.out);

  SampleSet set = generate_synthetic_task(cfg.task);
  write_corpus(stage.path().string(), set, "mean");
  write_provenance(stage.path(), doc, "gen-data", {cfg.task.seed});
  stage.commit();

  for (Split split : {Split::train, Split::val, Split::test}) {
    int normal = 0, anomalous = 0;
    for (const Sample& s : set.samples) {
      if (s.split != split || !s.label) continue;
      (*s.label == 0 ? normal : anomalous)++;
    }
    std::printf("%-5s %4d samples (%d normal / %d anomalous)\n", to_string(split).c_str(),
                normal + anomalous, normal, anomalous);
  }
  std::printf("corpus written to %s\n", o.out.c_str());
  return 0;
}

int cmd_train(const std::string& strategy, const CommonOpts& o) {
  auto [doc, cfg] = materialize(o);
  StageDir stage(o.out);

  SampleSet data = generate_synthetic_task(cfg.task);
  RunReport report;
  if (strategy == "two_phase") {
    Step1Result s1 =
        train_step1(build_autoencoder<float>(cfg.model, cfg.train.seed), data, cfg.train);
    save_checkpoint((stage.path() / "autoencoder.ckpt").string(), s1.best_autoencoder);
    save_checkpoint((stage.path() / "encoder.ckpt").string(), s1.best_encoder);
    TrainResult r2 = train_step2(s1.best_encoder, data, cfg.train);
    save_checkpoint((stage.path() / "model.ckpt").string(), r2.best);
    s1.report.checkpoint_path = "encoder.ckpt";
    r2.report.checkpoint_path = "model.ckpt";
    write_text(stage.path() / "step1_report.json", s1.report.to_json().dump(2) + "\n");
    write_text(stage.path() / "report.json", r2.report.to_json().dump(2) + "\n");
    report = r2.report;
  } else {
    TrainResult r = train_baseline(baseline_kind_from_string(strategy), data, cfg.model, cfg.train);
    save_checkpoint((stage.path() / "model.ckpt").string(), r.best);
    r.report.checkpoint_path = "model.ckpt";
    write_text(stage.path() / "report.json", r.report.to_json().dump(2) + "\n");
    report = r.report;
  }
  write_provenance(stage.path(), doc, "train", {cfg.train.seed});
  stage.commit();

  std::printf("%s seed %llu: best epoch %d, val loss %.6f, test auroc %.4f\n", strategy.c_str(),
              static_cast<unsigned long long>(cfg.train.seed), report.best_epoch,
              report.best_val_loss, report.test_auroc);
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const CommonOpts& o) {
  auto [doc, cfg] = materialize(o);
  Checkpoint ckpt = load_checkpoint_arg(ckpt_path);
  if (ckpt.kind == "encoder") {
    throw UsageError("an encoder checkpoint has no evaluable head; pass the full model");
  }

  SampleSet data = generate_synthetic_task(cfg.task);
  json result{{"checkpoint", ckpt_path}, {"kind", ckpt.kind}};
  if (ckpt.kind == "classifier") {
    const Classifier model = classifier_from_checkpoint(ckpt);
    const ClassifierEval ev = evaluate_classifier(model, data, Split::test, cfg.train.batch_size);
    result["test_auroc"] = ev.auroc;
    result["test_entropy_mean"] = ev.entropy_mean;
    result["test_entropy_std"] = ev.entropy_std;
  } else {
    const Autoencoder model = autoencoder_from_checkpoint(ckpt);
    result["val_saliency_loss"] = evaluate_saliency_loss(model, data, Split::val, cfg.train.batch_size);
    result["test_saliency_loss"] =
        evaluate_saliency_loss(model, data, Split::test, cfg.train.batch_size);
    result["val_mass_inside_gt_bbox"] =
        mean_mass_inside_bbox(model, data, Split::val, cfg.train.batch_size);
  }
  std::printf("%s\n", result.dump(2).c_str());

  if (!o.out.empty()) {
    StageDir stage(o.out);
    write_text(stage.path() / "evaluation.json", result.dump(2) + "\n");
    write_provenance(stage.path(), doc, "evaluate", {cfg.train.seed});
    stage.commit();
  }
  return 0;
}

int cmd_experiment(const CommonOpts& o) {
  auto [doc, cfg] = materialize(o);
  StageDir stage(o.out);

  SampleSet data = generate_synthetic_task(cfg.task);
  ExperimentResult res = run_experiment(cfg, data, o.jobs);

  write_text(stage.path() / "metrics.csv", res.metrics_csv);
  write_text(stage.path() / "aggregate.json", res.aggregate.dump(2) + "\n");
  for (const CellResult& cell : res.cells) {
    const fs::path dir = stage.path() / "runs" / cell.strategy / std::to_string(cell.seed);
    fs::create_directories(dir);
    if (!cell.ok) {
      write_text(dir / "error.txt", cell.error + "\n");
      continue;
    }
    RunReport rep = cell.report;
    if (cell.model_checkpoint) {
      save_checkpoint((dir / "model.ckpt").string(), *cell.model_checkpoint);
      rep.checkpoint_path = "model.ckpt";
    }
    write_text(dir / "report.json", rep.to_json().dump(2) + "\n");
    if (cell.step1_report) {
      RunReport s1 = *cell.step1_report;
      if (cell.encoder_checkpoint) {
        save_checkpoint((dir / "encoder.ckpt").string(), *cell.encoder_checkpoint);
        s1.checkpoint_path = "encoder.ckpt";
      }
      write_text(dir / "step1_report.json", s1.to_json().dump(2) + "\n");
    }
  }
  write_provenance(stage.path(), doc, "experiment", cfg.experiment.seeds);
  stage.commit();

  std::fputs(res.table.c_str(), stdout);
  return res.any_failed ? 1 : 0;
}

int cmd_export_saliency(const std::string& ckpt_path, const CommonOpts& o) {
  auto [doc, cfg] = materialize(o);
  Checkpoint ckpt = load_checkpoint_arg(ckpt_path);
  if (ckpt.kind == "encoder") {
    throw UsageError("an encoder checkpoint produces no maps; pass an autoencoder or classifier");
  }

  StageDir stage(o.out);
  SampleSet data = generate_synthetic_task(cfg.task);
  const std::vector<int> picked = data.indices_of(Split::train);
  const int extent = cfg.task.extent;
  const int batch = cfg.train.batch_size;

  int written = 0;
  for (std::size_t at = 0; at < picked.size(); at += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(picked.size(), at + static_cast<std::size_t>(batch));
    const std::vector<int> chunk(picked.begin() + static_cast<std::ptrdiff_t>(at),
                                 picked.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<SaliencyMap> maps;
    if (ckpt.kind == "autoencoder") {
      const Autoencoder model = autoencoder_from_checkpoint(ckpt);
      maps = generate_saliency_for_unlabeled(model, batch_images(data, chunk));
    } else {
      const Classifier model = classifier_from_checkpoint(ckpt);
      Tensor bottleneck;
      model.forward(batch_images(data, chunk), &bottleneck);
      const Tensor cams = class_evidence_map(
          model, bottleneck, std::vector<int>(chunk.size(), 1));  // anomaly-class evidence
      for (std::size_t j = 0; j < chunk.size(); ++j) {
        maps.push_back(tensor_row_to_map(cams, static_cast<int>(j), extent));
      }
    }
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      char name[32];
      std::snprintf(name, sizeof name, "train_%05d.pgm", chunk[j]);
      write_pgm((stage.path() / name).string(), maps[j]);
      ++written;
    }
  }
  write_provenance(stage.path(), doc, "export-saliency", {cfg.task.seed});
  stage.commit();

  std::printf("wrote %d saliency maps to %s\n", written, o.out.c_str());
  return 0;
}

int cmd_inspect_checkpoint(const std::string& ckpt_path) {
  const Checkpoint ckpt = load_checkpoint_arg(ckpt_path);
  std::printf("kind:  %s\n", ckpt.kind.c_str());
  std::printf("model: %s\n", model_spec_to_json(ckpt.spec).dump().c_str());
  std::size_t total = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    std::string shape;
    for (int d = 0; d < tensor.rank(); ++d) {
      shape += (d ? "x" : "") + std::to_string(tensor.dim(d));
    }
    std::printf("  %-24s %-12s %8lld values\n", name.c_str(), shape.c_str(),
                static_cast<long long>(tensor.size()));
    total += static_cast<std::size_t>(tensor.size());
  }
  std::printf("total parameters: %zu\n", total);
  return 0;
}

}  // namespace
}  // namespace sgt

int sgt_run_cli(int argc, char** argv) {
  using sgt::CommonOpts;

  CLI::App app{"saliency-guided training harness"};
  app.set_version_flag("--version", sgt::kToolVersion);
  app.require_subcommand(1);

  CommonOpts opts;
  std::string strategy, ckpt_path;

  auto add_common = [&opts](CLI::App* cmd, bool with_jobs = false) {
    cmd->add_option("--config", opts.config_path, "JSON config; absent keys keep defaults")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "output directory (must not exist)");
    cmd->add_option("--overrides", opts.overrides, "dotted.key=value config overrides")
        ->take_all();
    if (with_jobs) {
      cmd->add_option("--jobs", opts.jobs, "max parallel experiment cells")
          ->check(CLI::PositiveNumber);
    }
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic corpus to disk");
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "run one training strategy for one seed");
  train->add_option("strategy", strategy, "two_phase | xent | joint_cam | joint_gaze")
      ->required()
      ->check(CLI::IsMember({"two_phase", "xent", "joint_cam", "joint_gaze"}));
  add_common(train);

  CLI::App* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on the configured task");
  eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required()->check(CLI::ExistingFile);
  add_common(eval);

  CLI::App* exp = app.add_subcommand("experiment", "run the full strategy x seed matrix");
  add_common(exp, /*with_jobs=*/true);

  CLI::App* exps = app.add_subcommand("export-saliency", "write per-image saliency maps as PGM");
  exps->add_option("checkpoint", ckpt_path, "autoencoder or classifier checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  add_common(exps);

  CLI::App* inspect = app.add_subcommand("inspect-checkpoint", "describe a checkpoint file");
  inspect->add_option("checkpoint", ckpt_path, "checkpoint file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return sgt::cmd_gen_data(opts);
    if (train->parsed()) return sgt::cmd_train(strategy, opts);
    if (eval->parsed()) return sgt::cmd_evaluate(ckpt_path, opts);
    if (exp->parsed()) return sgt::cmd_experiment(opts);
    if (exps->parsed()) return sgt::cmd_export_saliency(ckpt_path, opts);
    if (inspect->parsed()) return sgt::cmd_inspect_checkpoint(ckpt_path);
    return 2;  // unreachable: require_subcommand(1)
  } catch (const sgt::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
