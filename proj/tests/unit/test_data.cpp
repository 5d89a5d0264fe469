#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "sgt/data.hpp"
#include "sgt/metrics.hpp"
#include "sgt/pgm.hpp"
#include "sgt/rng.hpp"

namespace fs = std::filesystem;

namespace {

sgt::SaliencyMap random_map(int h, int w, sgt::Rng& rng) {
  sgt::SaliencyMap m(h, w);
  for (auto& v : m.values) v = static_cast<float>(rng.uniform());
  return m;
}

// Unique scratch directory, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("sgt_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string read_file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool images_equal(const sgt::GrayImage& a, const sgt::GrayImage& b) {
  return a.height == b.height && a.width == b.width && a.values == b.values;
}

}  // namespace

TEST_CASE("fusion: mean and max trivial cases") {
  sgt::Rng rng(1);
  const sgt::SaliencyMap one = random_map(5, 7, rng);
  CHECK(images_equal(sgt::fuse_annotations_mean({one}), one));
  CHECK(images_equal(sgt::fuse_annotations_max({one}), one));

  sgt::SaliencyMap zeros(4, 4);
  sgt::SaliencyMap ones(4, 4);
  for (auto& v : ones.values) v = 1.0f;
  const auto mean = sgt::fuse_annotations_mean({zeros, ones});
  for (float v : mean.values) CHECK(v == 0.5f);
  const auto mx = sgt::fuse_annotations_max({zeros, ones});
  for (float v : mx.values) CHECK(v == 1.0f);
}

TEST_CASE("fusion: loop oracle, idempotence, commutativity, max >= mean") {
  sgt::Rng rng(2);
  std::vector<sgt::SaliencyMap> maps;
  for (int i = 0; i < 3; ++i) maps.push_back(random_map(6, 6, rng));

  const auto mean = sgt::fuse_annotations_mean(maps);
  const auto mx = sgt::fuse_annotations_max(maps);
  for (int i = 0; i < mean.numel(); ++i) {
    double acc = 0.0;
    float best = maps[0].values[i];
    for (const auto& m : maps) {
      acc += m.values[i];
      best = std::max(best, m.values[i]);
    }
    CHECK(std::abs(mean.values[i] - acc / 3.0) < 1e-7);
    CHECK(mx.values[i] == best);
    CHECK(mx.values[i] >= mean.values[i] - 1e-7f);
  }

  // M copies of one map fuse to that map.
  const auto& m0 = maps[0];
  CHECK(images_equal(sgt::fuse_annotations_max({m0, m0, m0}), m0));
  const auto mean_copies = sgt::fuse_annotations_mean({m0, m0, m0, m0});
  for (int i = 0; i < m0.numel(); ++i) CHECK(mean_copies.values[i] == doctest::Approx(m0.values[i]).epsilon(1e-7));

  // Order independence.
  std::vector<sgt::SaliencyMap> shuffled = {maps[2], maps[0], maps[1]};
  CHECK(images_equal(sgt::fuse_annotations_max(shuffled), mx));
  const auto mean_shuffled = sgt::fuse_annotations_mean(shuffled);
  for (int i = 0; i < mean.numel(); ++i) CHECK(mean_shuffled.values[i] == doctest::Approx(mean.values[i]).epsilon(1e-7));
}

TEST_CASE("fusion: errors on empty input and shape mismatch") {
  CHECK_THROWS_AS(sgt::fuse_annotations_mean({}), std::invalid_argument);
  CHECK_THROWS_AS(sgt::fuse_annotations_max({}), std::invalid_argument);
  sgt::SaliencyMap a(4, 4), b(4, 5);
  CHECK_THROWS_AS(sgt::fuse_annotations_mean({a, b}), std::invalid_argument);
  CHECK_THROWS_AS(sgt::fuse_annotations_max({a, b}), std::invalid_argument);
}

TEST_CASE("resize: constant maps stay constant at any extent") {
  sgt::GrayImage img(5, 3);
  for (auto& v : img.values) v = 0.42f;
  for (int extent : {1, 2, 7, 16}) {
    const auto out = sgt::resize_canonical(img, extent);
    CHECK(out.height == extent);
    CHECK(out.width == extent);
    for (float v : out.values) CHECK(v == doctest::Approx(0.42f).epsilon(1e-6));
  }
}

TEST_CASE("resize: 2x upscale of a [[0,1],[0,1]] ramp has monotone rows") {
  sgt::GrayImage img(2, 2);
  img.at(0, 1) = 1.0f;
  img.at(1, 1) = 1.0f;
  const auto out = sgt::resize_bilinear(img, 4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x + 1 < 4; ++x) CHECK(out.at(y, x) <= out.at(y, x + 1));
    CHECK(out.at(y, 0) == 0.0f);
    CHECK(out.at(y, 3) == 1.0f);
  }
}

TEST_CASE("resize: output range stays inside input range") {
  sgt::Rng rng(3);
  const auto img = random_map(13, 9, rng);
  const float lo = sgt::min_value(img);
  const float hi = sgt::max_value(img);
  for (int extent : {4, 17, 32}) {
    const auto out = sgt::resize_canonical(img, extent);
    CHECK(sgt::min_value(out) >= lo - 1e-6f);
    CHECK(sgt::max_value(out) <= hi + 1e-6f);
  }
}

TEST_CASE("resize: smooth field survives downscale-then-upscale within 0.05") {
  sgt::GrayImage img(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) img.at(y, x) = static_cast<float>(x + y) / 30.0f;
  }
  const auto down = sgt::resize_bilinear(img, 8, 8);
  const auto up = sgt::resize_bilinear(down, 16, 16);
  float worst = 0.0f;
  for (int i = 0; i < img.numel(); ++i) worst = std::max(worst, std::abs(up.values[i] - img.values[i]));
  CHECK(worst < 0.05f);
}

TEST_CASE("resize: zero extent is rejected") {
  sgt::GrayImage img(4, 4);
  CHECK_THROWS_AS(sgt::resize_bilinear(img, 0, 4), std::invalid_argument);
  CHECK_THROWS_AS(sgt::resize_bilinear(img, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(sgt::resize_canonical(img, -1), std::invalid_argument);
}

TEST_CASE("box blur: exact 9-tap means with zero padding") {
  sgt::GrayImage impulse(5, 5);
  impulse.at(2, 2) = 1.0f;
  const auto blurred = sgt::box_blur_3x3(impulse);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 5; ++x) {
      const bool near = std::abs(y - 2) <= 1 && std::abs(x - 2) <= 1;
      CHECK(blurred.at(y, x) == doctest::Approx(near ? 1.0f / 9.0f : 0.0f));
    }
  }

  sgt::GrayImage flat(4, 4);
  for (auto& v : flat.values) v = 1.0f;
  const auto edge = sgt::box_blur_3x3(flat);
  CHECK(edge.at(1, 1) == doctest::Approx(1.0f));        // full window
  CHECK(edge.at(0, 1) == doctest::Approx(6.0f / 9.0f)); // edge
  CHECK(edge.at(0, 0) == doctest::Approx(4.0f / 9.0f)); // corner
}

TEST_CASE("minmax_stretch and peak_normalize conventions") {
  sgt::GrayImage img(2, 3);
  img.values = {0.2f, 0.4f, 0.6f, 0.8f, 1.0f, 0.3f};
  const auto stretched = sgt::minmax_stretch(img);
  CHECK(sgt::min_value(stretched) == 0.0f);
  CHECK(sgt::max_value(stretched) == 1.0f);
  CHECK(stretched.values[1] == doctest::Approx(0.25f));

  sgt::GrayImage flat(3, 3);
  for (auto& v : flat.values) v = 0.7f;
  const auto flat_out = sgt::minmax_stretch(flat);
  for (float v : flat_out.values) CHECK(v == 0.0f);

  const auto peaked = sgt::peak_normalize(img);
  CHECK(sgt::max_value(peaked) == 1.0f);
  CHECK(peaked.values[0] == doctest::Approx(0.2f));

  sgt::GrayImage zeros(2, 2);
  const auto still_zero = sgt::peak_normalize(zeros);
  for (float v : still_zero.values) CHECK(v == 0.0f);
}

TEST_CASE("pgm: write-read round-trip is exact byte/255 quantization") {
  TempDir tmp("pgm");
  sgt::GrayImage img(3, 5);
  for (int i = 0; i < img.numel(); ++i) img.values[i] = static_cast<float>((i * 17) % 256) / 255.0f;

  const auto path = (tmp.path / "a.pgm").string();
  sgt::write_pgm(path, img);
  const auto loaded = sgt::read_pgm(path);
  REQUIRE(loaded.height == 3);
  REQUIRE(loaded.width == 5);
  for (int i = 0; i < img.numel(); ++i) {
    CHECK(loaded.values[i] == static_cast<float>((i * 17) % 256) / 255.0f);
  }

  // read -> write reproduces the file byte for byte.
  const auto path2 = (tmp.path / "b.pgm").string();
  sgt::write_pgm(path2, loaded);
  CHECK(read_file_bytes(path) == read_file_bytes(path2));
}

TEST_CASE("pgm: header comments, scaled maxval, malformed files") {
  TempDir tmp("pgm_hdr");
  {
    std::ofstream out(tmp.path / "c.pgm", std::ios::binary);
    out << "P5\n# a comment\n2 2\n# another\n128\n";
    const unsigned char raster[4] = {0, 32, 64, 128};
    out.write(reinterpret_cast<const char*>(raster), 4);
  }
  const auto img = sgt::read_pgm((tmp.path / "c.pgm").string());
  CHECK(img.values[0] == 0.0f);
  CHECK(img.values[1] == doctest::Approx(32.0f / 128.0f));
  CHECK(img.values[3] == 1.0f);

  {
    std::ofstream out(tmp.path / "bad_magic.pgm", std::ios::binary);
    out << "P2\n2 2\n255\n0 0 0 0\n";
  }
  CHECK_THROWS_AS(sgt::read_pgm((tmp.path / "bad_magic.pgm").string()), std::runtime_error);

  {
    std::ofstream out(tmp.path / "short.pgm", std::ios::binary);
    out << "P5\n4 4\n255\nxx";
  }
  CHECK_THROWS_AS(sgt::read_pgm((tmp.path / "short.pgm").string()), std::runtime_error);

  {
    std::ofstream out(tmp.path / "deep.pgm", std::ios::binary);
    out << "P5\n2 2\n65535\n";
    const unsigned char raster[8] = {0};
    out.write(reinterpret_cast<const char*>(raster), 8);
  }
  CHECK_THROWS_AS(sgt::read_pgm((tmp.path / "deep.pgm").string()), std::runtime_error);

  CHECK_THROWS_AS(sgt::read_pgm((tmp.path / "missing.pgm").string()), std::runtime_error);
}

TEST_CASE("synthetic task: bit-identical regeneration from one spec") {
  sgt::SyntheticTaskSpec spec;
  spec.n_train = 30;
  spec.n_val = 9;
  spec.n_test = 15;
  spec.seed = 77;
  const auto a = sgt::generate_synthetic_task(spec);
  const auto b = sgt::generate_synthetic_task(spec);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(images_equal(a.samples[i].image, b.samples[i].image));
    CHECK(a.samples[i].label == b.samples[i].label);
    CHECK(a.samples[i].subject_id == b.samples[i].subject_id);
    CHECK(a.samples[i].split == b.samples[i].split);
    REQUIRE(a.samples[i].saliency.has_value());
    REQUIRE(b.samples[i].saliency.has_value());
    CHECK(images_equal(*a.samples[i].saliency, *b.samples[i].saliency));
  }

  sgt::SyntheticTaskSpec other = spec;
  other.seed = 78;
  const auto c = sgt::generate_synthetic_task(other);
  bool any_diff = false;
  for (size_t i = 0; i < a.samples.size() && !any_diff; ++i) {
    any_diff = !images_equal(a.samples[i].image, c.samples[i].image);
  }
  CHECK(any_diff);
}

TEST_CASE("synthetic task: construction rules hold on every sample") {
  sgt::SyntheticTaskSpec spec;
  spec.n_train = 60;
  spec.n_val = 15;
  spec.n_test = 30;
  spec.seed = 5;
  const auto set = sgt::generate_synthetic_task(spec);

  CHECK(set.count_of(sgt::Split::train) == 60);
  CHECK(set.count_of(sgt::Split::val) == 15);
  CHECK(set.count_of(sgt::Split::test) == 30);

  int anomalous[3] = {0, 0, 0};
  for (const auto& s : set.samples) {
    REQUIRE(s.label.has_value());
    REQUIRE(s.saliency.has_value());
    CHECK(s.image.height == spec.extent);
    CHECK(sgt::min_value(s.image) >= 0.0f);
    CHECK(sgt::max_value(s.image) <= 1.0f);
    if (*s.label == 1) {
      anomalous[static_cast<int>(s.split)] += 1;
      CHECK(sgt::max_value(*s.saliency) > 0.5f);  // at least one confident pixel
    } else {
      CHECK(sgt::max_value(*s.saliency) == 0.0f);  // normals carry all-zero maps
    }
  }
  // 1:2 normal:anomalous in every split.
  CHECK(anomalous[0] == 40);
  CHECK(anomalous[1] == 10);
  CHECK(anomalous[2] == 20);

  sgt::check_subject_disjoint(set);
}

TEST_CASE("synthetic task: spec validation rejects bad configurations") {
  sgt::SyntheticTaskSpec spec;
  spec.known_anomaly_kinds = {"blob"};
  spec.unknown_anomaly_kinds = {"blob", "ring"};
  CHECK_THROWS_AS(sgt::generate_synthetic_task(spec), std::invalid_argument);

  spec = {};
  spec.n_val = 0;
  CHECK_THROWS_AS(sgt::generate_synthetic_task(spec), std::invalid_argument);

  spec = {};
  spec.spurious_cue_strength = 1.5;
  CHECK_THROWS_AS(sgt::generate_synthetic_task(spec), std::invalid_argument);

  spec = {};
  spec.known_anomaly_kinds = {"vortex"};
  CHECK_THROWS_AS(sgt::generate_synthetic_task(spec), std::invalid_argument);

  spec = {};
  spec.extent = 8;
  CHECK_THROWS_AS(sgt::generate_synthetic_task(spec), std::invalid_argument);
}

TEST_CASE("synthetic task: corner-cue shortcut wins train but fails the shifted test split") {
  sgt::SyntheticTaskSpec spec;
  spec.n_train = 300;
  spec.n_val = 60;
  spec.n_test = 300;
  spec.spurious_cue_strength = 1.0;
  spec.seed = 31;
  const auto set = sgt::generate_synthetic_task(spec);

  // Hand-coded shortcut classifier: score = mean of the 3x3 corner patch.
  auto corner_score = [](const sgt::GrayImage& img) {
    double acc = 0.0;
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 3; ++x) acc += img.at(y, x);
    }
    return acc / 9.0;
  };

  int correct = 0, total = 0;
  for (int i : set.indices_of(sgt::Split::train)) {
    const auto& s = set.samples[i];
    const int pred = corner_score(s.image) > 0.95 ? 1 : 0;
    correct += (pred == *s.label);
    ++total;
  }
  CHECK(static_cast<double>(correct) / total > 0.95);

  std::vector<sgt::ScoredSample> scored;
  for (int i : set.indices_of(sgt::Split::test)) {
    const auto& s = set.samples[i];
    scored.push_back({corner_score(s.image), *s.label});
  }
  CHECK(sgt::auroc(scored) < 0.6);
}

TEST_CASE("subject-disjoint split: small exact case and determinism") {
  std::vector<sgt::Sample> samples;
  for (int i = 0; i < 9; ++i) {
    sgt::Sample s;
    s.image = sgt::GrayImage(4, 4);
    s.subject_id = "subj" + std::to_string(i % 3);
    samples.push_back(std::move(s));
  }
  const std::vector<double> thirds = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  const auto a = sgt::split_subject_disjoint(samples, thirds, 7);
  sgt::check_subject_disjoint(a);
  CHECK(a.samples.size() == 9);
  CHECK(a.count_of(sgt::Split::train) == 3);
  CHECK(a.count_of(sgt::Split::val) == 3);
  CHECK(a.count_of(sgt::Split::test) == 3);

  const auto b = sgt::split_subject_disjoint(samples, thirds, 7);
  for (size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i].split == b.samples[i].split);
}

TEST_CASE("subject-disjoint split: exhaustive scan at 1000 samples / 50 subjects") {
  sgt::Rng rng(13);
  std::vector<sgt::Sample> samples;
  for (int i = 0; i < 1000; ++i) {
    sgt::Sample s;
    s.image = sgt::GrayImage(2, 2);
    s.subject_id = "s" + std::to_string(rng.uniform_index(50));
    samples.push_back(std::move(s));
  }
  const auto split = sgt::split_subject_disjoint(samples, {0.6, 0.2, 0.2}, 21);
  REQUIRE(split.samples.size() == 1000);

  std::set<std::string> per_split[3];
  for (const auto& s : split.samples) per_split[static_cast<int>(s.split)].insert(s.subject_id);
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      std::vector<std::string> overlap;
      std::set_intersection(per_split[a].begin(), per_split[a].end(),
                            per_split[b].begin(), per_split[b].end(), std::back_inserter(overlap));
      CHECK(overlap.empty());
    }
  }
  CHECK(per_split[0].size() + per_split[1].size() + per_split[2].size() == 50);
  sgt::check_subject_disjoint(split);
}

TEST_CASE("subject-disjoint split: validation errors") {
  std::vector<sgt::Sample> two;
  for (int i = 0; i < 2; ++i) {
    sgt::Sample s;
    s.image = sgt::GrayImage(2, 2);
    s.subject_id = "only" + std::to_string(i);
    two.push_back(std::move(s));
  }
  CHECK_THROWS_AS(sgt::split_subject_disjoint(two, {0.5, 0.3, 0.2}, 1), std::invalid_argument);
  CHECK_THROWS_AS(sgt::split_subject_disjoint(two, {0.5, 0.6, 0.2}, 1), std::invalid_argument);
  CHECK_THROWS_AS(sgt::split_subject_disjoint(two, {0.5, 0.5}, 1), std::invalid_argument);
  CHECK_THROWS_AS(sgt::split_subject_disjoint(two, {0.7, -0.2, 0.5}, 1), std::invalid_argument);
}

TEST_CASE("corpus: write + load round-trip up to 8-bit quantization") {
  sgt::SyntheticTaskSpec spec;
  spec.n_train = 12;
  spec.n_val = 6;
  spec.n_test = 9;
  spec.seed = 3;
  const auto set = sgt::generate_synthetic_task(spec);

  TempDir tmp("corpus");
  sgt::write_corpus(tmp.path.string(), set, "mean");
  const auto loaded = sgt::load_corpus((tmp.path / "manifest.jsonl").string());
  REQUIRE(loaded.samples.size() == set.samples.size());

  const float q = 0.5f / 255.0f + 1e-6f;
  for (size_t i = 0; i < set.samples.size(); ++i) {
    const auto& orig = set.samples[i];
    const auto& got = loaded.samples[i];
    CHECK(got.label == orig.label);
    CHECK(got.subject_id == orig.subject_id);
    CHECK(got.split == orig.split);
    REQUIRE(got.saliency.has_value());
    for (int p = 0; p < orig.image.numel(); ++p) {
      CHECK(std::abs(got.image.values[p] - orig.image.values[p]) <= q);
    }
    if (*orig.label == 1) {
      // Peak-1 maps stretch back to themselves, so quantization is the only error.
      for (int p = 0; p < orig.saliency->numel(); ++p) {
        CHECK(std::abs(got.saliency->values[p] - orig.saliency->values[p]) <= q);
      }
    } else {
      CHECK(sgt::max_value(*got.saliency) == 0.0f);
    }
  }
}

TEST_CASE("corpus: regeneration produces byte-identical files") {
  sgt::SyntheticTaskSpec spec;
  spec.n_train = 6;
  spec.n_val = 3;
  spec.n_test = 3;
  spec.seed = 9;
  const auto set = sgt::generate_synthetic_task(spec);

  TempDir a("corpus_a"), b("corpus_b");
  sgt::write_corpus(a.path.string(), set, "max");
  sgt::write_corpus(b.path.string(), set, "max");
  CHECK(read_file_bytes(a.path / "manifest.jsonl") == read_file_bytes(b.path / "manifest.jsonl"));
  CHECK(read_file_bytes(a.path / "images" / "train_00000.pgm") ==
        read_file_bytes(b.path / "images" / "train_00000.pgm"));
  CHECK(read_file_bytes(a.path / "saliency" / "train_00001_a0.pgm") ==
        read_file_bytes(b.path / "saliency" / "train_00001_a0.pgm"));
}

TEST_CASE("corpus: only correctly classified annotators contribute") {
  TempDir tmp("corpus_filter");
  fs::create_directories(tmp.path / "saliency");
  fs::create_directories(tmp.path / "images");

  sgt::GrayImage img(4, 4);
  for (auto& v : img.values) v = 0.5f;
  sgt::write_pgm((tmp.path / "images" / "x.pgm").string(), img);

  sgt::SaliencyMap good(4, 4);
  good.at(0, 0) = 1.0f;
  sgt::SaliencyMap bad(4, 4);
  bad.at(3, 3) = 1.0f;
  sgt::write_pgm((tmp.path / "saliency" / "good.pgm").string(), good);
  sgt::write_pgm((tmp.path / "saliency" / "bad.pgm").string(), bad);

  {
    std::ofstream out(tmp.path / "manifest.jsonl");
    out << R"({"image_path":"images/x.pgm","label":1,"subject_id":"s0","split":"train",)"
        << R"("saliency_paths":["saliency/good.pgm","saliency/bad.pgm"],)"
        << R"("annotator_correct":[true,false],"fusion":"mean"})" << "\n";
    out << R"({"image_path":"images/x.pgm","label":0,"subject_id":"s1","split":"val",)"
        << R"("saliency_paths":["saliency/bad.pgm"],)"
        << R"("annotator_correct":[false],"fusion":"mean"})" << "\n";
  }
  const auto set = sgt::load_corpus((tmp.path / "manifest.jsonl").string());
  REQUIRE(set.samples.size() == 2);

  // Record 1: only the correct annotator's map survives (then min-max stretch).
  REQUIRE(set.samples[0].saliency.has_value());
  CHECK(set.samples[0].saliency->at(0, 0) == 1.0f);
  CHECK(set.samples[0].saliency->at(3, 3) == 0.0f);

  // Record 2: all annotators incorrect -> no saliency at all.
  CHECK(!set.samples[1].saliency.has_value());

  {
    std::ofstream out(tmp.path / "broken.jsonl");
    out << R"({"image_path":"images/x.pgm","label":1,"subject_id":"s0","split":"train",)"
        << R"("saliency_paths":["saliency/good.pgm"],)"
        << R"("annotator_correct":[true,false],"fusion":"mean"})" << "\n";
  }
  CHECK_THROWS_AS(sgt::load_corpus((tmp.path / "broken.jsonl").string()), std::runtime_error);
}

TEST_CASE("batching: stacking and field requirements") {
  sgt::SyntheticTaskSpec spec;
  spec.n_train = 6;
  spec.n_val = 3;
  spec.n_test = 3;
  spec.seed = 1;
  auto set = sgt::generate_synthetic_task(spec);

  const std::vector<int> idx = {0, 2, 4};
  const auto images = sgt::batch_images(set, idx);
  CHECK(images.shape() == sgt::Shape{3, 1, 32, 32});
  CHECK(images.at({1, 0, 5, 7}) == set.samples[2].image.at(5, 7));

  const auto sal = sgt::batch_saliency(set, idx);
  CHECK(sal.shape() == sgt::Shape{3, 1, 32, 32});
  CHECK(sal.at({2, 0, 9, 9}) == set.samples[4].saliency->at(9, 9));

  const auto labels = sgt::batch_labels(set, idx);
  CHECK(labels == std::vector<int>{*set.samples[0].label, *set.samples[2].label, *set.samples[4].label});

  set.samples[0].saliency.reset();
  CHECK_THROWS_AS(sgt::batch_saliency(set, idx), std::invalid_argument);
  set.samples[0].label.reset();
  CHECK_THROWS_AS(sgt::batch_labels(set, idx), std::invalid_argument);
  CHECK_THROWS_AS(sgt::batch_images(set, {}), std::invalid_argument);
}
