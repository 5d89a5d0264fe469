#include "sgt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"
#include "sgt/pgm.hpp"
#include "sgt/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace sgt {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw std::logic_error("to_string(Split): bad enum value");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "' (expected train|val|test)");
}

std::vector<int> SampleSet::indices_of(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i) {
    if (samples[i].split == s) out.push_back(i);
  }
  return out;
}

int SampleSet::count_of(Split s) const {
  return static_cast<int>(indices_of(s).size());
}

namespace {

enum class DefectKind { blob, stripe, ring, checker };

DefectKind kind_from_name(const std::string& name) {
  if (name == "blob") return DefectKind::blob;
  if (name == "stripe") return DefectKind::stripe;
  if (name == "ring") return DefectKind::ring;
  if (name == "checker") return DefectKind::checker;
  throw std::invalid_argument("unknown anomaly kind '" + name +
                              "' (expected blob|stripe|ring|checker)");
}

void bump(GrayImage& img, int y, int x, float delta) {
  img.at(y, x) = std::clamp(img.at(y, x) + delta, 0.0f, 1.0f);
}

// Draws one defect onto img and writes its binary support into mask.
void draw_defect(DefectKind kind, Rng& rng, GrayImage& img, GrayImage& mask) {
  const int h = img.height;
  const int w = img.width;
  switch (kind) {
    case DefectKind::blob: {
      const int r = 3 + static_cast<int>(rng.uniform_index(4));
      const int cy = r + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(h - 2 * r)));
      const int cx = r + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(w - 2 * r)));
      for (int y = cy - r; y <= cy + r; ++y) {
        for (int x = cx - r; x <= cx + r; ++x) {
          const int dy = y - cy;
          const int dx = x - cx;
          if (dy * dy + dx * dx > r * r) continue;
          bump(img, y, x, 0.35f);
          mask.at(y, x) = 1.0f;
        }
      }
      break;
    }
    case DefectKind::stripe: {
      const bool horizontal = rng.uniform() < 0.5;
      const int thickness = 2 + static_cast<int>(rng.uniform_index(2));
      const int length = 8 + static_cast<int>(rng.uniform_index(7));
      const int span_y = horizontal ? thickness : length;
      const int span_x = horizontal ? length : thickness;
      const int y0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(h - span_y + 1)));
      const int x0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(w - span_x + 1)));
      for (int y = y0; y < y0 + span_y; ++y) {
        for (int x = x0; x < x0 + span_x; ++x) {
          bump(img, y, x, 0.35f);
          mask.at(y, x) = 1.0f;
        }
      }
      break;
    }
    case DefectKind::ring: {
      const int outer = 4 + static_cast<int>(rng.uniform_index(4));
      const int inner = outer - 2;
      const int cy = outer + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(h - 2 * outer)));
      const int cx = outer + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(w - 2 * outer)));
      for (int y = cy - outer; y <= cy + outer; ++y) {
        for (int x = cx - outer; x <= cx + outer; ++x) {
          const int dy = y - cy;
          const int dx = x - cx;
          const int d2 = dy * dy + dx * dx;
          if (d2 > outer * outer || d2 <= inner * inner) continue;
          bump(img, y, x, 0.35f);
          mask.at(y, x) = 1.0f;
        }
      }
      break;
    }
    case DefectKind::checker: {
      const int patch = 8;
      const int y0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(h - patch + 1)));
      const int x0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(w - patch + 1)));
      for (int y = y0; y < y0 + patch; ++y) {
        for (int x = x0; x < x0 + patch; ++x) {
          const int cell = ((y - y0) / 2 + (x - x0) / 2) % 2;
          bump(img, y, x, cell == 0 ? 0.3f : -0.3f);
          mask.at(y, x) = 1.0f;
        }
      }
      break;
    }
  }
}

// Smooth low-frequency background + a fixed sinusoidal texture + pixel noise.
GrayImage make_background(int extent, double noise_sigma, Rng& rng) {
  GrayImage coarse(4, 4);
  for (auto& v : coarse.values) v = static_cast<float>(0.25 + 0.5 * rng.uniform());
  GrayImage img = resize_bilinear(coarse, extent, extent);
  constexpr double kTau = 6.283185307179586;
  for (int y = 0; y < extent; ++y) {
    for (int x = 0; x < extent; ++x) {
      const double texture = 0.12 * std::sin(kTau * 3.0 * x / extent) * std::cos(kTau * 2.0 * y / extent);
      const double v = img.at(y, x) + texture + noise_sigma * rng.normal();
      img.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

SaliencyMap saliency_from_mask(const GrayImage& mask) {
  return peak_normalize(box_blur_3x3(box_blur_3x3(mask)));
}

constexpr int kSubjectsPerSplit = 20;

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (extent < 16) throw std::invalid_argument("SyntheticTaskSpec: extent must be >= 16");
  if (n_train <= 0 || n_val <= 0 || n_test <= 0) {
    throw std::invalid_argument("SyntheticTaskSpec: split counts must be positive");
  }
  if (spurious_cue_strength < 0.0 || spurious_cue_strength > 1.0) {
    throw std::invalid_argument("SyntheticTaskSpec: spurious_cue_strength must be in [0,1]");
  }
  if (noise_sigma < 0.0) throw std::invalid_argument("SyntheticTaskSpec: noise_sigma must be >= 0");
  if (known_anomaly_kinds.empty() || unknown_anomaly_kinds.empty()) {
    throw std::invalid_argument("SyntheticTaskSpec: anomaly kind lists must be nonempty");
  }
  for (const auto& k : known_anomaly_kinds) kind_from_name(k);
  for (const auto& k : unknown_anomaly_kinds) kind_from_name(k);
  for (const auto& k : known_anomaly_kinds) {
    if (std::find(unknown_anomaly_kinds.begin(), unknown_anomaly_kinds.end(), k) !=
        unknown_anomaly_kinds.end()) {
      throw std::invalid_argument("SyntheticTaskSpec: kind '" + k + "' is both known and unknown");
    }
  }
}

SaliencyMap fuse_annotations_mean(const std::vector<SaliencyMap>& maps) {
  if (maps.empty()) throw std::invalid_argument("fuse_annotations_mean: empty input");
  SaliencyMap out(maps[0].height, maps[0].width);
  for (const auto& m : maps) {
    if (m.height != out.height || m.width != out.width) {
      throw std::invalid_argument("fuse_annotations_mean: shape mismatch");
    }
  }
  for (size_t i = 0; i < out.values.size(); ++i) {
    double acc = 0.0;
    for (const auto& m : maps) acc += m.values[i];
    out.values[i] = static_cast<float>(acc / maps.size());
  }
  return out;
}

SaliencyMap fuse_annotations_max(const std::vector<SaliencyMap>& maps) {
  if (maps.empty()) throw std::invalid_argument("fuse_annotations_max: empty input");
  SaliencyMap out(maps[0].height, maps[0].width);
  for (const auto& m : maps) {
    if (m.height != out.height || m.width != out.width) {
      throw std::invalid_argument("fuse_annotations_max: shape mismatch");
    }
  }
  for (size_t i = 0; i < out.values.size(); ++i) {
    float best = maps[0].values[i];
    for (const auto& m : maps) best = std::max(best, m.values[i]);
    out.values[i] = best;
  }
  return out;
}

SampleSet generate_synthetic_task(const SyntheticTaskSpec& spec) {
  spec.validate();

  struct Recipe {
    Split split;
    int count;
    const std::vector<std::string>* kinds;
    bool cue_allowed;
    uint64_t stream_base;
    const char* subject_prefix;
  };
  const Recipe recipes[] = {
      {Split::train, spec.n_train, &spec.known_anomaly_kinds, true, 1ull << 32, "train_s"},
      {Split::val, spec.n_val, &spec.known_anomaly_kinds, false, 2ull << 32, "val_s"},
      {Split::test, spec.n_test, &spec.unknown_anomaly_kinds, false, 3ull << 32, "test_s"},
  };

  SampleSet set;
  set.samples.reserve(static_cast<size_t>(spec.n_train + spec.n_val + spec.n_test));

  for (const Recipe& rec : recipes) {
    for (int i = 0; i < rec.count; ++i) {
      Rng rng(mix_seed(spec.seed, rec.stream_base + static_cast<uint64_t>(i)));

      Sample s;
      s.split = rec.split;
      char subj[32];
      std::snprintf(subj, sizeof(subj), "%s%02d",
                    rec.subject_prefix, static_cast<int>(rng.uniform_index(kSubjectsPerSplit)));
      s.subject_id = subj;

      s.image = make_background(spec.extent, spec.noise_sigma, rng);
      const bool anomalous = (i % 3 != 0);  // 1 normal : 2 anomalous
      s.label = anomalous ? 1 : 0;

      GrayImage mask(spec.extent, spec.extent);
      if (anomalous) {
        const auto& kinds = *rec.kinds;
        const DefectKind kind = kind_from_name(kinds[rng.uniform_index(kinds.size())]);
        draw_defect(kind, rng, s.image, mask);
        if (rec.cue_allowed && rng.uniform() < spec.spurious_cue_strength) {
          for (int y = 0; y < 3; ++y) {
            for (int x = 0; x < 3; ++x) s.image.at(y, x) = 1.0f;
          }
        }
        s.saliency = saliency_from_mask(mask);
      } else {
        s.saliency = mask;  // all-zero map for normal samples
      }
      set.samples.push_back(std::move(s));
    }
  }
  return set;
}

SampleSet split_subject_disjoint(const std::vector<Sample>& samples,
                                 const std::vector<double>& ratios, uint64_t seed) {
  if (ratios.size() != 3) {
    throw std::invalid_argument("split_subject_disjoint: need exactly 3 ratios (train, val, test)");
  }
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw std::invalid_argument("split_subject_disjoint: ratios must be >= 0");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("split_subject_disjoint: ratios must sum to 1");
  }

  // Unique subjects in first-appearance order, then a seeded shuffle.
  std::vector<std::string> subjects;
  std::unordered_map<std::string, int> subject_index;
  for (const auto& s : samples) {
    if (subject_index.emplace(s.subject_id, static_cast<int>(subjects.size())).second) {
      subjects.push_back(s.subject_id);
    }
  }
  const int n = static_cast<int>(subjects.size());
  int needed = 0;
  for (double r : ratios) {
    if (r > 0.0) ++needed;
  }
  if (n < needed) {
    throw std::invalid_argument("split_subject_disjoint: fewer subjects than splits");
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  // Largest-remainder apportionment, then guarantee every positive-ratio
  // split at least one subject.
  std::vector<int> counts(3, 0);
  std::vector<std::pair<double, int>> fracs;
  int assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = ratios[k] * n;
    counts[k] = static_cast<int>(std::floor(exact));
    assigned += counts[k];
    fracs.emplace_back(exact - counts[k], k);
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int r = 0; r < n - assigned; ++r) counts[fracs[r % 3].second] += 1;
  for (int k = 0; k < 3; ++k) {
    if (ratios[k] > 0.0 && counts[k] == 0) {
      int donor = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      counts[donor] -= 1;
      counts[k] += 1;
    }
  }

  std::vector<Split> subject_split(n);
  int cursor = 0;
  const Split split_of[3] = {Split::train, Split::val, Split::test};
  for (int k = 0; k < 3; ++k) {
    for (int c = 0; c < counts[k]; ++c) subject_split[order[cursor++]] = split_of[k];
  }

  SampleSet out;
  out.samples = samples;
  for (auto& s : out.samples) s.split = subject_split[subject_index.at(s.subject_id)];
  return out;
}

void check_subject_disjoint(const SampleSet& set) {
  std::unordered_map<std::string, Split> seen;
  for (const auto& s : set.samples) {
    auto [it, inserted] = seen.emplace(s.subject_id, s.split);
    if (!inserted && it->second != s.split) {
      throw std::logic_error("subject '" + s.subject_id + "' appears in splits " +
                             to_string(it->second) + " and " + to_string(s.split));
    }
  }
}

void write_corpus(const std::string& dir, const SampleSet& set, const std::string& fusion) {
  if (fusion != "mean" && fusion != "max") {
    throw std::invalid_argument("write_corpus: fusion must be 'mean' or 'max'");
  }
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "saliency");

  std::ofstream manifest(fs::path(dir) / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw std::runtime_error("write_corpus: cannot write manifest in '" + dir + "'");

  for (size_t i = 0; i < set.samples.size(); ++i) {
    const Sample& s = set.samples[i];
    char stem[48];
    std::snprintf(stem, sizeof(stem), "%s_%05zu", to_string(s.split).c_str(), i);

    const std::string image_rel = std::string("images/") + stem + ".pgm";
    write_pgm((fs::path(dir) / image_rel).string(), s.image);

    ordered_json rec;
    rec["image_path"] = image_rel;
    if (s.label.has_value()) {
      rec["label"] = *s.label;
    } else {
      rec["label"] = nullptr;
    }
    rec["subject_id"] = s.subject_id;
    rec["split"] = to_string(s.split);
    ordered_json paths = ordered_json::array();
    ordered_json correct = ordered_json::array();
    if (s.saliency.has_value()) {
      const std::string sal_rel = std::string("saliency/") + stem + "_a0.pgm";
      write_pgm((fs::path(dir) / sal_rel).string(), *s.saliency);
      paths.push_back(sal_rel);
      correct.push_back(true);
    }
    rec["saliency_paths"] = paths;
    rec["annotator_correct"] = correct;
    rec["fusion"] = fusion;
    manifest << rec.dump() << "\n";
  }
  if (!manifest) throw std::runtime_error("write_corpus: manifest write failed in '" + dir + "'");
}

SampleSet load_corpus(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("load_corpus: cannot open '" + manifest_path + "'");
  const fs::path base = fs::path(manifest_path).parent_path();

  SampleSet set;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("load_corpus: bad JSON at " + manifest_path + ":" +
                               std::to_string(line_no) + ": " + e.what());
    }

    Sample s;
    s.image = read_pgm((base / rec.at("image_path").get<std::string>()).string());
    if (!rec.at("label").is_null()) s.label = rec.at("label").get<int>();
    s.subject_id = rec.at("subject_id").get<std::string>();
    s.split = split_from_string(rec.at("split").get<std::string>());

    const auto& paths = rec.at("saliency_paths");
    const auto& correct = rec.at("annotator_correct");
    if (paths.size() != correct.size()) {
      throw std::runtime_error("load_corpus: saliency_paths/annotator_correct length mismatch at line " +
                               std::to_string(line_no));
    }
    std::vector<SaliencyMap> maps;
    for (size_t a = 0; a < paths.size(); ++a) {
      if (!correct[a].get<bool>()) continue;  // only correctly classified annotators contribute
      maps.push_back(read_pgm((base / paths[a].get<std::string>()).string()));
    }
    if (!maps.empty()) {
      const std::string fusion = rec.at("fusion").get<std::string>();
      SaliencyMap fused;
      if (fusion == "mean") {
        fused = fuse_annotations_mean(maps);
      } else if (fusion == "max") {
        fused = fuse_annotations_max(maps);
      } else {
        throw std::runtime_error("load_corpus: unknown fusion '" + fusion + "' at line " +
                                 std::to_string(line_no));
      }
      s.saliency = minmax_stretch(fused);
    }
    set.samples.push_back(std::move(s));
  }
  return set;
}

namespace {

Tensor stack_images(const SampleSet& set, const std::vector<int>& indices, bool want_saliency) {
  if (indices.empty()) throw std::invalid_argument("batch: empty index list");
  const Sample& first = set.samples.at(indices[0]);
  const int h = first.image.height;
  const int w = first.image.width;
  const int n = static_cast<int>(indices.size());
  Tensor out = Tensor::zeros({n, 1, h, w});
  auto dst = out.mutable_data();
  for (int b = 0; b < n; ++b) {
    const Sample& s = set.samples.at(indices[b]);
    const GrayImage* src = &s.image;
    if (want_saliency) {
      if (!s.saliency.has_value()) {
        throw std::invalid_argument("batch_saliency: sample " + std::to_string(indices[b]) +
                                    " has no saliency map");
      }
      src = &*s.saliency;
    }
    if (src->height != h || src->width != w) {
      throw std::invalid_argument("batch: mixed image extents");
    }
    std::copy(src->values.begin(), src->values.end(),
              dst.data() + static_cast<size_t>(b) * h * w);
  }
  return out;
}

}  // namespace

Tensor batch_images(const SampleSet& set, const std::vector<int>& indices) {
  return stack_images(set, indices, false);
}

Tensor batch_saliency(const SampleSet& set, const std::vector<int>& indices) {
  return stack_images(set, indices, true);
}

std::vector<int> batch_labels(const SampleSet& set, const std::vector<int>& indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int i : indices) {
    const Sample& s = set.samples.at(i);
    if (!s.label.has_value()) {
      throw std::invalid_argument("batch_labels: sample " + std::to_string(i) + " has no label");
    }
    out.push_back(*s.label);
  }
  return out;
}

}  // namespace sgt
