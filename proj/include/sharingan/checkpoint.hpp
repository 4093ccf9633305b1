#pragma once

#include <string>
#include <vector>

#include "sharingan/nn.hpp"

namespace sharingan {

// Checkpoint container: magic "SHRN", version u32, tensor count u32, then per
// tensor: name length u16, UTF-8 name, rank u8, dims u32 each, raw f32
// payload. All integers little-endian.
constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const NamedParams<float>& tensors);
NamedParams<float> load_checkpoint(const std::string& path);

// helpers for stashing strings/scalars as tensors inside the container
Tensor encode_text_tensor(const std::string& text);
std::string decode_text_tensor(const Tensor& t);

}  // namespace sharingan
