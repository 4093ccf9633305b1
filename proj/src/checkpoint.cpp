#include "sharingan/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace sharingan {

namespace {

void put_u16(std::ostream& f, uint16_t v) {
  const uint8_t b[2] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& f, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>((v >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::istream& f, const std::string& path) {
  uint8_t b[2];
  f.read(reinterpret_cast<char*>(b), 2);
  if (f.gcount() != 2) throw std::runtime_error("checkpoint: truncated file " + path);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& f, const std::string& path) {
  uint8_t b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (f.gcount() != 4) throw std::runtime_error("checkpoint: truncated file " + path);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f32_payload(std::ostream& f, const std::vector<float>& data) {
  for (float v : data) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(f, bits);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedParams<float>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write("SHRN", 4);
  put_u32(f, kCheckpointVersion);
  put_u32(f, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw std::runtime_error("checkpoint: tensor name too long: " + name);
    put_u16(f, static_cast<uint16_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    const uint8_t rank = static_cast<uint8_t>(t.rank());
    f.write(reinterpret_cast<const char*>(&rank), 1);
    for (int d : t.shape()) put_u32(f, static_cast<uint32_t>(d));
    put_f32_payload(f, t.vec());
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

NamedParams<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, "SHRN", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = get_u32(f, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  const uint32_t count = get_u32(f, path);
  NamedParams<float> out;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t nlen = get_u16(f, path);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    if (f.gcount() != nlen) throw std::runtime_error("checkpoint: truncated file " + path);
    uint8_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), 1);
    if (f.gcount() != 1) throw std::runtime_error("checkpoint: truncated file " + path);
    Shape shape;
    for (int d = 0; d < rank; ++d) {
      const uint32_t dim = get_u32(f, path);
      if (dim == 0 || dim > (1u << 28)) throw std::runtime_error("checkpoint: bad dimension in " + path);
      shape.push_back(static_cast<int>(dim));
    }
    std::vector<float> data(static_cast<size_t>(numel_of(shape)));
    for (auto& v : data) {
      const uint32_t bits = get_u32(f, path);
      std::memcpy(&v, &bits, 4);
    }
    out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  return out;
}

Tensor encode_text_tensor(const std::string& text) {
  std::vector<float> data;
  data.reserve(text.size());
  for (unsigned char c : text) data.push_back(static_cast<float>(c));
  if (data.empty()) data.push_back(0.0f);
  const int n = static_cast<int>(data.size());
  return Tensor::from_data({n}, std::move(data));
}

std::string decode_text_tensor(const Tensor& t) {
  std::string s;
  for (float v : t.vec()) {
    const int c = static_cast<int>(v);
    if (c > 0 && c < 256) s.push_back(static_cast<char>(c));
  }
  return s;
}

}  // namespace sharingan
