#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sgt/checkpoint.hpp"
#include "sgt/config.hpp"
#include "sgt/ops.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("sgt_ckpt_" + tag + "_" + std::to_string(::getpid()));
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

bool tensors_bit_equal(const sgt::Tensor& a, const sgt::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto da = a.data();
  const auto db = b.data();
  for (size_t i = 0; i < da.size(); ++i) {
    if (da[i] != db[i]) return false;
  }
  return true;
}

sgt::ModelSpec small_spec() {
  sgt::ModelSpec spec;
  spec.input_extent = 16;
  spec.base_width = 4;
  spec.depth = 2;
  return spec;
}

}  // namespace

TEST_CASE("checkpoint: autoencoder round-trip is bit-exact and runnable") {
  TempDir tmp("ae");
  const auto spec = small_spec();
  auto ae = sgt::build_autoencoder<float>(spec, 42);

  sgt::Checkpoint ckpt{"autoencoder", spec, ae.named_parameters()};
  const auto path = (tmp.path / "ae.ckpt").string();
  sgt::save_checkpoint(path, ckpt);

  const auto loaded = sgt::load_checkpoint(path);
  CHECK(loaded.kind == "autoencoder");
  CHECK(loaded.spec.base_width == 4);
  CHECK(loaded.spec.depth == 2);
  REQUIRE(loaded.tensors.size() == ckpt.tensors.size());
  for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
    CHECK(loaded.tensors[i].first == ckpt.tensors[i].first);
    CHECK(tensors_bit_equal(loaded.tensors[i].second, ckpt.tensors[i].second));
  }

  // Reconstructed model computes the identical function.
  auto rebuilt = sgt::autoencoder_from_checkpoint(loaded);
  sgt::Rng rng(7);
  sgt::Tensor x = sgt::Tensor::zeros({2, 1, 16, 16});
  {
    auto vals = x.mutable_data();
    for (auto& v : vals) v = static_cast<float>(rng.uniform());
  }
  const auto orig_out = ae.forward_saliency(x);
  const auto rebuilt_out = rebuilt.forward_saliency(x);
  CHECK(tensors_bit_equal(orig_out, rebuilt_out));
}

TEST_CASE("checkpoint: sidecar carries kind and architecture") {
  TempDir tmp("sidecar");
  const auto spec = small_spec();
  auto ae = sgt::build_autoencoder<float>(spec, 1);
  sgt::save_checkpoint((tmp.path / "m.ckpt").string(), {"autoencoder", spec, ae.named_parameters()});

  std::ifstream side(tmp.path / "m.ckpt.json");
  REQUIRE(side.good());
  const auto meta = sgt::json::parse(side);
  CHECK(meta.at("kind") == "autoencoder");
  CHECK(meta.at("model").at("base_width") == 4);
  CHECK(meta.at("model").at("input_extent") == 16);
  CHECK(meta.at("model").at("skip_connections") == true);
}

TEST_CASE("checkpoint: classifier round-trip and forward equality") {
  TempDir tmp("cls");
  const auto spec = small_spec();
  auto cls = sgt::build_classifier_random<float>(spec, 9);
  const auto path = (tmp.path / "c.ckpt").string();
  sgt::save_checkpoint(path, {"classifier", spec, cls.named_parameters()});

  auto rebuilt = sgt::classifier_from_checkpoint(sgt::load_checkpoint(path));
  sgt::Rng rng(3);
  sgt::Tensor x = sgt::Tensor::zeros({3, 1, 16, 16});
  {
    auto vals = x.mutable_data();
    for (auto& v : vals) v = static_cast<float>(rng.uniform());
  }
  CHECK(tensors_bit_equal(cls.forward(x), rebuilt.forward(x)));
}

TEST_CASE("checkpoint: encoder extraction from a full autoencoder checkpoint") {
  TempDir tmp("enc");
  const auto spec = small_spec();
  auto ae = sgt::build_autoencoder<float>(spec, 5);
  const auto path = (tmp.path / "ae.ckpt").string();
  sgt::save_checkpoint(path, {"autoencoder", spec, ae.named_parameters()});

  auto enc = sgt::encoder_from_checkpoint(sgt::load_checkpoint(path));
  const auto orig = ae.encoder.named_parameters();
  const auto got = enc.named_parameters();
  REQUIRE(orig.size() == got.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == got[i].first);
    CHECK(tensors_bit_equal(orig[i].second, got[i].second));
  }

  // An encoder-only checkpoint loads the same way.
  const auto path2 = (tmp.path / "enc.ckpt").string();
  sgt::save_checkpoint(path2, {"encoder", spec, ae.encoder.named_parameters()});
  auto enc2 = sgt::encoder_from_checkpoint(sgt::load_checkpoint(path2));
  const auto got2 = enc2.named_parameters();
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(tensors_bit_equal(orig[i].second, got2[i].second));
  }
}

TEST_CASE("checkpoint: saving twice produces byte-identical files") {
  TempDir tmp("dup");
  const auto spec = small_spec();
  auto ae = sgt::build_autoencoder<float>(spec, 11);
  sgt::save_checkpoint((tmp.path / "a.ckpt").string(), {"autoencoder", spec, ae.named_parameters()});
  sgt::save_checkpoint((tmp.path / "b.ckpt").string(), {"autoencoder", spec, ae.named_parameters()});
  CHECK(read_file_bytes(tmp.path / "a.ckpt") == read_file_bytes(tmp.path / "b.ckpt"));
  CHECK(read_file_bytes(tmp.path / "a.ckpt.json") == read_file_bytes(tmp.path / "b.ckpt.json"));
}

TEST_CASE("checkpoint: corruption and mismatch are loud errors") {
  TempDir tmp("bad");
  const auto spec = small_spec();
  auto ae = sgt::build_autoencoder<float>(spec, 2);
  const auto path = (tmp.path / "x.ckpt").string();
  sgt::save_checkpoint(path, {"autoencoder", spec, ae.named_parameters()});

  CHECK_THROWS_AS(sgt::load_checkpoint((tmp.path / "nope.ckpt").string()), std::runtime_error);

  // Bad magic.
  {
    auto bytes = read_file_bytes(path);
    bytes[0] = 'X';
    std::ofstream out(tmp.path / "badmagic.ckpt", std::ios::binary);
    out << bytes;
    std::ofstream side(tmp.path / "badmagic.ckpt.json");
    side << read_file_bytes(tmp.path / "x.ckpt.json");
  }
  CHECK_THROWS_AS(sgt::load_checkpoint((tmp.path / "badmagic.ckpt").string()), std::runtime_error);

  // Truncated payload.
  {
    auto bytes = read_file_bytes(path);
    bytes.resize(bytes.size() / 2);
    std::ofstream out(tmp.path / "short.ckpt", std::ios::binary);
    out << bytes;
    std::ofstream side(tmp.path / "short.ckpt.json");
    side << read_file_bytes(tmp.path / "x.ckpt.json");
  }
  CHECK_THROWS_AS(sgt::load_checkpoint((tmp.path / "short.ckpt").string()), std::runtime_error);

  // Wrong kind for the requested reconstruction.
  const auto ok = sgt::load_checkpoint(path);
  CHECK_THROWS_AS(sgt::classifier_from_checkpoint(ok), std::runtime_error);

  // Renamed tensor no longer matches the rebuilt architecture.
  auto tampered = ok;
  tampered.tensors[0].first = "encoder.stage0.kernel_renamed";
  CHECK_THROWS_AS(sgt::autoencoder_from_checkpoint(tampered), std::runtime_error);

  // Dropped tensor is caught by the count check.
  auto dropped = ok;
  dropped.tensors.pop_back();
  CHECK_THROWS_AS(sgt::autoencoder_from_checkpoint(dropped), std::runtime_error);
}
