#include "sgt/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>

#include "sgt/config.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace sgt {

namespace {

constexpr char kMagic[8] = {'S', 'G', 'C', 'K', 'P', 'T', '0', '1'};

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& in, const std::string& path) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file '" + path + "'");
  return v;
}

// Copies loaded tensor values into a freshly built model's parameters,
// demanding an exact name/shape correspondence in both directions.
void load_into(NamedParams model_params, const NamedParams& loaded, const std::string& what) {
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, t] : loaded) {
    if (!by_name.emplace(name, t).second) {
      throw std::runtime_error("checkpoint: duplicate tensor '" + name + "' in " + what);
    }
  }
  if (by_name.size() != model_params.size()) {
    throw std::runtime_error("checkpoint: " + what + " holds " + std::to_string(by_name.size()) +
                             " tensors, model expects " + std::to_string(model_params.size()));
  }
  for (auto& [name, param] : model_params) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint: " + what + " is missing tensor '" + name + "'");
    }
    if (it->second.shape() != param.shape()) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                               shape_to_string(it->second.shape()) + ", model expects " +
                               shape_to_string(param.shape()));
    }
    const auto src = it->second.data();
    auto dst = param.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write '" + path + "'");

  out.write(kMagic, sizeof(kMagic));
  write_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    write_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& shape = t.shape();
    write_u32(out, static_cast<uint32_t>(shape.size()));
    for (int d : shape) write_u32(out, static_cast<uint32_t>(d));
    const auto values = t.data();
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");

  std::ofstream side(path + ".json", std::ios::trunc);
  if (!side) throw std::runtime_error("checkpoint: cannot write '" + path + ".json'");
  const json meta = {{"kind", ckpt.kind}, {"model", model_spec_to_json(ckpt.spec)}};
  side << meta.dump(2) << "\n";
  if (!side) throw std::runtime_error("checkpoint: sidecar write failed for '" + path + ".json'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw std::runtime_error("checkpoint: missing sidecar '" + path + ".json'");
  json meta;
  try {
    meta = json::parse(side);
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint: bad sidecar '" + path + ".json': " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.kind = meta.at("kind").get<std::string>();
    ckpt.spec = model_spec_from_json(meta.at("model"));
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint: bad sidecar '" + path + ".json': " + e.what());
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + sizeof(magic), kMagic)) {
    throw std::runtime_error("checkpoint: '" + path + "' has a bad magic header");
  }

  const uint32_t count = read_u32(in, path);
  for (uint32_t r = 0; r < count; ++r) {
    const uint32_t name_len = read_u32(in, path);
    if (name_len > 4096) throw std::runtime_error("checkpoint: absurd name length in '" + path + "'");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw std::runtime_error("checkpoint: truncated file '" + path + "'");

    const uint32_t rank = read_u32(in, path);
    if (rank > 8) throw std::runtime_error("checkpoint: absurd tensor rank in '" + path + "'");
    Shape shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(read_u32(in, path));
      numel *= shape[d];
    }
    if (numel < 0 || numel > (1 << 28)) {
      throw std::runtime_error("checkpoint: absurd tensor size in '" + path + "'");
    }

    Tensor t = Tensor::zeros(shape);
    auto dst = t.mutable_data();
    in.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(dst.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated file '" + path + "'");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

Autoencoder autoencoder_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "autoencoder") {
    throw std::runtime_error("checkpoint: expected kind 'autoencoder', got '" + ckpt.kind + "'");
  }
  Autoencoder model = build_autoencoder<float>(ckpt.spec, 0);
  load_into(model.named_parameters(), ckpt.tensors, "autoencoder checkpoint");
  return model;
}

Classifier classifier_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "classifier") {
    throw std::runtime_error("checkpoint: expected kind 'classifier', got '" + ckpt.kind + "'");
  }
  Classifier model = build_classifier_random<float>(ckpt.spec, 0);
  load_into(model.named_parameters(), ckpt.tensors, "classifier checkpoint");
  return model;
}

Encoder encoder_from_checkpoint(const Checkpoint& ckpt) {
  NamedParams encoder_tensors;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("encoder.", 0) == 0) encoder_tensors.emplace_back(name, t);
  }
  if (ckpt.kind != "encoder" && ckpt.kind != "autoencoder" && ckpt.kind != "classifier") {
    throw std::runtime_error("checkpoint: unknown kind '" + ckpt.kind + "'");
  }
  Rng rng(0);
  Encoder enc(ckpt.spec, rng);
  load_into(enc.named_parameters(), encoder_tensors, "encoder tensors of " + ckpt.kind + " checkpoint");
  return enc;
}

}  // namespace sgt
