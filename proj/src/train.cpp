#include "sgt/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <thread>
#include <utility>

#include "sgt/metrics.hpp"
#include "sgt/rng.hpp"

namespace sgt {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::vector<int>> make_batches(const std::vector<int>& order, int batch_size) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), i + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Tensor> values_of(const NamedParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.second);
  return out;
}

NamedParams snapshot_params(const NamedParams& params) {
  NamedParams out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.first, p.second.copy(false));
  return out;
}

// Writes snapshot values back into the live parameter storages (positional;
// both lists come from the same named_parameters() call).
void restore_params(const NamedParams& live, const NamedParams& snap) {
  for (std::size_t i = 0; i < live.size(); ++i) {
    Tensor dst = live[i].second;
    const std::span<const float> src = snap[i].second.data();
    std::span<float> d = dst.mutable_data();
    std::copy(src.begin(), src.end(), d.begin());
  }
}

bool any_grad_nonzero(const NamedParams& params, const std::string& prefix) {
  for (const auto& p : params) {
    if (p.first.rfind(prefix, 0) != 0) continue;
    for (float g : p.second.grad())
      if (g != 0.0f) return true;
  }
  return false;
}

void require_saliency(const SampleSet& data, Split split, const std::string& who) {
  for (int idx : data.indices_of(split)) {
    if (!data.samples[static_cast<std::size_t>(idx)].saliency.has_value())
      throw std::invalid_argument(who + ": sample " + std::to_string(idx) + " in split '" +
                                  to_string(split) + "' has no saliency map");
  }
}

// Entropy of a model-produced map; a degenerate all-zero map carries no
// localization information, which the metric's convention scores as 1.
double entropy_or_one(const GrayImage& map) {
  for (float v : map.values)
    if (v > 0.0f) return salience_entropy(map);
  return 1.0;
}

json epoch_stats_json(const EpochStats& e) {
  json j;
  j["epoch"] = e.epoch;
  j["train_loss"] = e.train_loss;
  j["val_loss"] = e.val_loss;
  j["lr"] = e.lr;
  return j;
}

}  // namespace

json RunReport::deterministic_json() const {
  json j;
  j["phase"] = phase;
  j["seed"] = seed;
  j["best_epoch"] = best_epoch;
  j["best_val_loss"] = best_val_loss;
  j["test_auroc"] = test_auroc;
  j["test_entropy_mean"] = test_entropy_mean;
  j["test_entropy_std"] = test_entropy_std;
  j["encoder_grad_nonzero_first_batch"] = encoder_grad_nonzero_first_batch;
  json eps = json::array();
  for (const EpochStats& e : epochs) eps.push_back(epoch_stats_json(e));
  j["epochs"] = std::move(eps);
  return j;
}

json RunReport::to_json() const {
  json j = deterministic_json();
  j["wall_seconds"] = wall_seconds;
  j["checkpoint_path"] = checkpoint_path;
  return j;
}

Step1Result train_step1(Autoencoder model, const SampleSet& data, const TrainConfig& cfg) {
  const auto t0 = Clock::now();
  cfg.validate();
  const std::vector<int> train_idx = data.indices_of(Split::train);
  const std::vector<int> val_idx = data.indices_of(Split::val);
  if (train_idx.empty() || val_idx.empty())
    throw std::invalid_argument("train_step1: need non-empty train and val splits");
  require_saliency(data, Split::train, "train_step1");
  require_saliency(data, Split::val, "train_step1");

  NamedParams params = model.named_parameters();
  AdamW opt(values_of(params), cfg.adamw);

  RunReport rep;
  rep.phase = "step1";
  rep.seed = cfg.seed;

  NamedParams best = snapshot_params(params);
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  bool grad_checked = false;

  const auto val_batches = make_batches(val_idx, cfg.batch_size);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<int> order = train_idx;
    Rng shuffle_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double train_sum = 0.0;
    for (const auto& bi : make_batches(order, cfg.batch_size)) {
      const Tensor x = batch_images(data, bi);
      const Tensor h = batch_saliency(data, bi);
      Tape tape;
      double lval = 0.0;
      {
        TapeScope scope(tape);
        Tensor pred = model.forward_saliency(x);
        Tensor loss = saliency_pretrain_loss(pred, h, cfg.loss.per_pixel_mean);
        lval = static_cast<double>(loss.item());
        opt.zero_grad();
        backward(loss);
      }
      if (!grad_checked) {
        rep.encoder_grad_nonzero_first_batch = any_grad_nonzero(params, "encoder.");
        grad_checked = true;
      }
      opt.step();
      train_sum += lval * static_cast<double>(bi.size());
    }
    const double train_loss = train_sum / static_cast<double>(train_idx.size());

    double val_sum = 0.0;
    for (const auto& bi : val_batches) {
      Tensor pred = model.forward_saliency(batch_images(data, bi));
      Tensor loss = saliency_pretrain_loss(pred, batch_saliency(data, bi), cfg.loss.per_pixel_mean);
      val_sum += static_cast<double>(loss.item()) * static_cast<double>(bi.size());
    }
    const double val_loss = val_sum / static_cast<double>(val_idx.size());

    rep.epochs.push_back({epoch, train_loss, val_loss, cfg.adamw.lr});

    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best = snapshot_params(params);
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }

  rep.best_epoch = best_epoch;
  rep.best_val_loss = best_val;
  rep.wall_seconds = seconds_since(t0);

  const ModelSpec spec = model.encoder.spec();
  Step1Result out;
  out.best_autoencoder = Checkpoint{"autoencoder", spec, best};
  NamedParams enc;
  for (const auto& p : best)
    if (p.first.rfind("encoder.", 0) == 0) enc.push_back(p);
  out.best_encoder = Checkpoint{"encoder", spec, std::move(enc)};
  out.report = std::move(rep);
  return out;
}

namespace {

// Shared fine-tuning loop for step 2 and all single-phase baselines: SGD with
// the stepped schedule, per-epoch reshuffle, best-epoch selection by
// validation cross-entropy, test metrics from the restored best snapshot.
struct ClassSetup {
  std::string phase;
  NamedParams params;       // everything the optimizer updates (and snapshots)
  const Classifier* model;  // shares storages with `params`
  std::function<Tensor(const Tensor& x, const std::vector<int>& y, const std::vector<int>& bi)>
      batch_loss;
};

TrainResult run_classification(const ClassSetup& setup, const SampleSet& data,
                               const TrainConfig& cfg, Clock::time_point t0) {
  const std::vector<int> train_idx = data.indices_of(Split::train);
  const std::vector<int> val_idx = data.indices_of(Split::val);
  if (train_idx.empty() || val_idx.empty())
    throw std::invalid_argument(setup.phase + ": need non-empty train and val splits");

  Sgd::Config scfg;
  scfg.lr = cfg.sgd.lr;
  scfg.momentum = cfg.sgd.momentum;
  Sgd opt(values_of(setup.params), scfg);

  RunReport rep;
  rep.phase = setup.phase;
  rep.seed = cfg.seed;

  NamedParams best = snapshot_params(setup.params);
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  bool grad_checked = false;

  const auto val_batches = make_batches(val_idx, cfg.batch_size);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = cfg.sgd.lr_at(epoch);
    opt.set_lr(lr);

    std::vector<int> order = train_idx;
    Rng shuffle_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double train_sum = 0.0;
    for (const auto& bi : make_batches(order, cfg.batch_size)) {
      const Tensor x = batch_images(data, bi);
      const std::vector<int> y = batch_labels(data, bi);
      Tape tape;
      double lval = 0.0;
      {
        TapeScope scope(tape);
        Tensor loss = setup.batch_loss(x, y, bi);
        lval = static_cast<double>(loss.item());
        opt.zero_grad();
        backward(loss);
      }
      if (!grad_checked) {
        rep.encoder_grad_nonzero_first_batch = any_grad_nonzero(setup.params, "encoder.");
        grad_checked = true;
      }
      opt.step();
      train_sum += lval * static_cast<double>(bi.size());
    }
    const double train_loss = train_sum / static_cast<double>(train_idx.size());

    double val_sum = 0.0;
    for (const auto& bi : val_batches) {
      Tensor logits = setup.model->forward(batch_images(data, bi));
      Tensor loss = cross_entropy(logits, batch_labels(data, bi));
      val_sum += static_cast<double>(loss.item()) * static_cast<double>(bi.size());
    }
    const double val_loss = val_sum / static_cast<double>(val_idx.size());

    rep.epochs.push_back({epoch, train_loss, val_loss, lr});

    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best = snapshot_params(setup.params);
    } else if (epoch - best_epoch >= cfg.patience) {
      break;
    }
  }

  rep.best_epoch = best_epoch;
  rep.best_val_loss = best_val;

  restore_params(setup.params, best);
  if (data.count_of(Split::test) > 0) {
    const ClassifierEval ev = evaluate_classifier(*setup.model, data, Split::test, cfg.batch_size);
    rep.test_auroc = ev.auroc;
    rep.test_entropy_mean = ev.entropy_mean;
    rep.test_entropy_std = ev.entropy_std;
  }
  rep.wall_seconds = seconds_since(t0);

  // The classifier subset of the snapshot; joint_gaze also carries decoder
  // parameters, which do not belong in a classifier checkpoint.
  NamedParams cls;
  for (const auto& p : best)
    if (p.first.rfind("encoder.", 0) == 0 || p.first.rfind("head.", 0) == 0) cls.push_back(p);

  TrainResult out;
  out.best = Checkpoint{"classifier", setup.model->encoder.spec(), std::move(cls)};
  out.report = std::move(rep);
  return out;
}

}  // namespace

TrainResult train_step2(const Checkpoint& encoder_ckpt, const SampleSet& data,
                        const TrainConfig& cfg) {
  const auto t0 = Clock::now();
  cfg.validate();
  Encoder enc = encoder_from_checkpoint(encoder_ckpt);
  Classifier model = build_classifier(enc, encoder_ckpt.spec.num_classes, cfg.seed);

  ClassSetup setup;
  setup.phase = "step2";
  setup.params = model.named_parameters();
  setup.model = &model;
  setup.batch_loss = [&model](const Tensor& x, const std::vector<int>& y,
                              const std::vector<int>&) {
    return cross_entropy(model.forward(x), y);
  };
  return run_classification(setup, data, cfg, t0);
}

const char* to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::xent: return "xent";
    case BaselineKind::joint_cam: return "joint_cam";
    case BaselineKind::joint_gaze: return "joint_gaze";
  }
  throw std::logic_error("to_string: bad BaselineKind");
}

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "xent") return BaselineKind::xent;
  if (s == "joint_cam") return BaselineKind::joint_cam;
  if (s == "joint_gaze") return BaselineKind::joint_gaze;
  throw std::invalid_argument("baseline kind: expected xent|joint_cam|joint_gaze, got '" + s +
                              "'");
}

TrainResult train_baseline(BaselineKind kind, const SampleSet& data, const ModelSpec& spec,
                           const TrainConfig& cfg, const Checkpoint* init_encoder) {
  const auto t0 = Clock::now();
  cfg.validate();
  spec.validate();
  const double alpha = cfg.loss.alpha;
  const Dissimilarity dis = cfg.loss.dissimilarity;
  if (kind != BaselineKind::xent && alpha < 1.0)
    require_saliency(data, Split::train, to_string(kind));

  if (kind == BaselineKind::joint_gaze) {
    // One encoder feeds both the decoder (saliency term) and the head
    // (classification term): plain struct copies share parameter storages.
    Autoencoder ae = build_autoencoder<float>(spec, cfg.seed);
    if (init_encoder) ae.encoder = encoder_from_checkpoint(*init_encoder);
    Classifier model;
    model.encoder = ae.encoder;
    Rng head_rng(mix_seed(cfg.seed, 0x68656164));  // dedicated head stream
    model.head = ClassifierHead(spec.bottleneck_channels(), spec.num_classes, head_rng);

    ClassSetup setup;
    setup.phase = "joint_gaze";
    setup.params = ae.named_parameters();
    for (auto& p : model.head.named_parameters()) setup.params.push_back(std::move(p));
    setup.model = &model;
    setup.batch_loss = [&ae, &model, &data, alpha, dis](const Tensor& x,
                                                        const std::vector<int>& y,
                                                        const std::vector<int>& bi) {
      std::vector<Tensor> skips;
      Tensor bottleneck = ae.encoder.forward(x, &skips);
      Tensor logits = model.head.forward(global_avg_pool(bottleneck));
      if (alpha == 1.0) return cross_entropy(logits, y);
      Tensor maps = ae.decoder.forward(bottleneck, skips);
      return joint_loss(logits, y, maps, batch_saliency(data, bi), alpha, dis);
    };
    return run_classification(setup, data, cfg, t0);
  }

  Classifier model =
      init_encoder
          ? build_classifier(encoder_from_checkpoint(*init_encoder), spec.num_classes, cfg.seed)
          : build_classifier_random<float>(spec, cfg.seed);

  ClassSetup setup;
  setup.phase = to_string(kind);
  setup.params = model.named_parameters();
  setup.model = &model;
  if (kind == BaselineKind::xent) {
    setup.batch_loss = [&model](const Tensor& x, const std::vector<int>& y,
                                const std::vector<int>&) {
      return cross_entropy(model.forward(x), y);
    };
  } else {
    setup.batch_loss = [&model, &data, alpha, dis](const Tensor& x, const std::vector<int>& y,
                                                   const std::vector<int>& bi) {
      Tensor bottleneck;
      Tensor logits = model.forward(x, &bottleneck);
      // At alpha == 1 the evidence-map branch is never built, so the loss
      // graph is the plain cross-entropy one, node for node.
      if (alpha == 1.0) return cross_entropy(logits, y);
      Tensor evidence = class_evidence_map(model, bottleneck, y);
      return joint_loss(logits, y, evidence, batch_saliency(data, bi), alpha, dis);
    };
  }
  return run_classification(setup, data, cfg, t0);
}

std::vector<SaliencyMap> generate_saliency_for_unlabeled(const Autoencoder& model,
                                                         const Tensor& images) {
  if (!images.defined() || images.rank() != 4)
    throw std::invalid_argument("generate_saliency_for_unlabeled: images must be [N,C,H,W]");
  const Tensor pred = model.forward_saliency(images);
  const int n = pred.dim(0);
  const int h = pred.dim(2);
  const int w = pred.dim(3);
  const std::span<const float> v = pred.data();
  const std::size_t stride = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);

  std::vector<SaliencyMap> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SaliencyMap m;
    m.height = h;
    m.width = w;
    const std::size_t off = static_cast<std::size_t>(i) * stride;
    m.values.assign(v.begin() + static_cast<std::ptrdiff_t>(off),
                    v.begin() + static_cast<std::ptrdiff_t>(off + stride));
    out.push_back(std::move(m));
  }
  return out;
}

ClassifierEval evaluate_classifier(const Classifier& model, const SampleSet& data, Split split,
                                   int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("evaluate_classifier: batch_size must be >= 1");
  const std::vector<int> idx = data.indices_of(split);
  if (idx.empty()) throw std::invalid_argument("evaluate_classifier: empty split");

  const int extent = model.encoder.spec().input_extent;
  std::vector<ScoredSample> scored;
  std::vector<double> entropies;
  scored.reserve(idx.size());
  entropies.reserve(idx.size());

  for (const auto& bi : make_batches(idx, batch_size)) {
    Tensor bottleneck;
    Tensor logits = model.forward(batch_images(data, bi), &bottleneck);
    Tensor probs = softmax(logits, 1);
    const std::vector<int> y = batch_labels(data, bi);
    const Tensor evidence =
        class_evidence_map(model, bottleneck, std::vector<int>(bi.size(), 1));
    const std::span<const float> ev = evidence.data();
    const std::size_t stride = static_cast<std::size_t>(extent) * static_cast<std::size_t>(extent);

    for (std::size_t r = 0; r < bi.size(); ++r) {
      scored.push_back({static_cast<double>(probs.at({static_cast<int>(r), 1})), y[r]});
      GrayImage m;
      m.height = extent;
      m.width = extent;
      const std::size_t off = r * stride;
      m.values.assign(ev.begin() + static_cast<std::ptrdiff_t>(off),
                      ev.begin() + static_cast<std::ptrdiff_t>(off + stride));
      entropies.push_back(entropy_or_one(m));
    }
  }

  ClassifierEval out;
  out.auroc = auroc(scored);
  const auto [em, es] = aggregate(entropies);
  out.entropy_mean = em;
  out.entropy_std = es;
  return out;
}

double evaluate_saliency_loss(const Autoencoder& model, const SampleSet& data, Split split,
                              int batch_size) {
  if (batch_size < 1)
    throw std::invalid_argument("evaluate_saliency_loss: batch_size must be >= 1");
  const std::vector<int> idx = data.indices_of(split);
  if (idx.empty()) throw std::invalid_argument("evaluate_saliency_loss: empty split");
  require_saliency(data, split, "evaluate_saliency_loss");

  double sum = 0.0;
  for (const auto& bi : make_batches(idx, batch_size)) {
    Tensor pred = model.forward_saliency(batch_images(data, bi));
    Tensor loss = saliency_pretrain_loss(pred, batch_saliency(data, bi));
    sum += static_cast<double>(loss.item()) * static_cast<double>(bi.size());
  }
  return sum / static_cast<double>(idx.size());
}

namespace {

CellResult run_cell(const std::string& strategy, uint64_t seed, const Config& cfg,
                    const SampleSet& data) {
  CellResult cell;
  cell.strategy = strategy;
  cell.seed = seed;
  try {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    if (strategy == "two_phase") {
      Autoencoder ae = build_autoencoder<float>(cfg.model, seed);
      Step1Result s1 = train_step1(std::move(ae), data, tc);
      TrainResult s2 = train_step2(s1.best_encoder, data, tc);
      cell.report = std::move(s2.report);
      cell.step1_report = std::move(s1.report);
      cell.model_checkpoint = std::move(s2.best);
      cell.encoder_checkpoint = std::move(s1.best_encoder);
    } else {
      TrainResult r = train_baseline(baseline_kind_from_string(strategy), data, cfg.model, tc);
      cell.report = std::move(r.report);
      cell.model_checkpoint = std::move(r.best);
    }
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  return cell;
}

}  // namespace

ExperimentResult run_experiment(const Config& cfg, const SampleSet& data, int jobs) {
  cfg.validate();
  if (cfg.experiment.strategies.empty() || cfg.experiment.seeds.empty())
    throw std::invalid_argument("run_experiment: need at least one strategy and one seed");

  struct CellKey {
    std::string strategy;
    uint64_t seed;
  };
  std::vector<CellKey> keys;
  for (const std::string& s : cfg.experiment.strategies)
    for (uint64_t seed : cfg.experiment.seeds) keys.push_back({s, seed});

  ExperimentResult res;
  res.cells.resize(keys.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= keys.size()) return;
      res.cells[i] = run_cell(keys[i].strategy, keys[i].seed, cfg, data);
    }
  };

  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(keys.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  // Deterministic assembly in config order, independent of scheduling.
  std::string csv = "strategy,seed,epoch,train_loss,val_loss,lr\n";
  char buf[256];
  for (const CellResult& cell : res.cells) {
    if (!cell.ok) continue;
    for (const EpochStats& e : cell.report.epochs) {
      std::snprintf(buf, sizeof buf, "%s,%llu,%d,%.17g,%.17g,%.17g\n", cell.strategy.c_str(),
                    static_cast<unsigned long long>(cell.seed), e.epoch, e.train_loss, e.val_loss,
                    e.lr);
      csv += buf;
    }
  }
  res.metrics_csv = std::move(csv);

  json strategies = json::array();
  json failures = json::array();
  std::string table;
  std::snprintf(buf, sizeof buf, "%-10s  %10s  %9s  %14s  %13s  %5s\n", "strategy", "auroc_mean",
                "auroc_std", "s_entropy_mean", "s_entropy_std", "seeds");
  table += buf;

  for (const std::string& s : cfg.experiment.strategies) {
    std::vector<double> aurocs;
    std::vector<double> ents;
    json seeds_ok = json::array();
    for (const CellResult& cell : res.cells) {
      if (cell.strategy != s) continue;
      if (!cell.ok) {
        res.any_failed = true;
        json f;
        f["strategy"] = cell.strategy;
        f["seed"] = cell.seed;
        f["error"] = cell.error;
        failures.push_back(std::move(f));
        continue;
      }
      aurocs.push_back(cell.report.test_auroc);
      ents.push_back(cell.report.test_entropy_mean);
      seeds_ok.push_back(cell.seed);
    }

    json e;
    e["strategy"] = s;
    e["seeds"] = std::move(seeds_ok);
    if (!aurocs.empty()) {
      const auto [am, as] = aggregate(aurocs);
      const auto [em, es] = aggregate(ents);
      e["auroc_mean"] = am;
      e["auroc_std"] = as;
      e["s_entropy_mean"] = em;
      e["s_entropy_std"] = es;
      std::snprintf(buf, sizeof buf, "%-10s  %10.4f  %9.4f  %14.4f  %13.4f  %5d\n", s.c_str(), am,
                    as, em, es, static_cast<int>(aurocs.size()));
    } else {
      e["auroc_mean"] = nullptr;
      e["auroc_std"] = nullptr;
      e["s_entropy_mean"] = nullptr;
      e["s_entropy_std"] = nullptr;
      std::snprintf(buf, sizeof buf, "%-10s  %10s  %9s  %14s  %13s  %5d\n", s.c_str(), "-", "-",
                    "-", "-", 0);
    }
    table += buf;
    strategies.push_back(std::move(e));
  }

  res.aggregate = json::object();
  res.aggregate["strategies"] = std::move(strategies);
  res.aggregate["failures"] = std::move(failures);
  res.table = std::move(table);
  return res;
}

}  // namespace sgt
