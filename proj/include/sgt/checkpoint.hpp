#pragma once

#include <string>

#include "sgt/nn.hpp"

namespace sgt {

// A checkpoint is a flat archive of named parameter tensors plus a JSON
// sidecar (written at <path>.json) carrying the architecture spec and the
// checkpoint kind. Round-trips are bit-exact.
struct Checkpoint {
  std::string kind;  // "autoencoder" | "classifier" | "encoder"
  ModelSpec spec;
  NamedParams tensors;
};

// Binary layout: magic "SGCKPT01", u32 record count, then per record
// u32 name length, name bytes, u32 rank, u32 extents[rank], and the raw
// little-endian float32 payload.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Rebuild runnable models from a loaded checkpoint. Each checks the kind,
// reconstructs the architecture from the sidecar spec, and requires the
// tensor names and shapes to match the freshly built model exactly.
Autoencoder autoencoder_from_checkpoint(const Checkpoint& ckpt);
Classifier classifier_from_checkpoint(const Checkpoint& ckpt);

// Extracts the encoder: from an "encoder" checkpoint directly, or the
// "encoder."-prefixed subset of an autoencoder/classifier checkpoint.
Encoder encoder_from_checkpoint(const Checkpoint& ckpt);

}  // namespace sgt
