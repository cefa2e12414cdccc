#pragma once

#include <string>
#include <vector>

#include "hnav/nn.hpp"

namespace hnav {

// Binary checkpoint, little-endian: magic "HNAV", format version u32,
// metadata length u32 + UTF-8 text, tensor count u32, then per tensor:
// name length u32 + bytes, rank u32, dims u32 each, raw f32 data.
struct Checkpoint {
  struct Tensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
  };
  std::string metadata;
  std::vector<Tensor> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Appends every tensor of the store, in registration order.
void append_params(Checkpoint& ckpt, const ParamStore& params,
                   const std::string& prefix = "");
// Copies tensors named prefix+entry-name back into the store; every store
// entry must be present with an identical shape.
void extract_params(const Checkpoint& ckpt, ParamStore& params,
                    const std::string& prefix = "");

// Metadata is "key = value" lines; these parse it back.
std::string metadata_value(const std::string& metadata, const std::string& key);

}  // namespace hnav
