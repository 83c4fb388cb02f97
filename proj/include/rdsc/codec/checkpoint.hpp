#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "rdsc/codec/model.hpp"
#include "rdsc/common/bytes.hpp"
#include "rdsc/common/error.hpp"

namespace rdsc {

inline constexpr std::uint16_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[] = "RDSC";

/// Layout (little-endian):
///   magic "RDSC" | version u16 | Cmid u32 | Cy u32 | s u32 | lambda f64 |
///   tensor count u32 | per tensor: rank u32, extents u32 x rank, f32 data |
///   model id u64
template <typename T>
std::vector<std::uint8_t> serialize_checkpoint(const CodecModel<T>& model) {
  ByteWriter w;
  w.tag(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  w.u32(model.config.mid_channels);
  w.u32(model.config.latent_channels);
  w.u32(model.config.downsampling);
  w.f64(model.config.lambda);
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, p] : params) {
    w.u32(static_cast<std::uint32_t>(p->rank()));
    for (std::size_t d : p->shape) w.u32(static_cast<std::uint32_t>(d));
    for (const T& v : p->data) w.f32(static_cast<float>(v));
  }
  w.u64(model.model_id());
  return w.take();
}

template <typename T = float>
CodecModel<T> parse_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.tag(kCheckpointMagic)) throw FormatError("checkpoint: bad magic");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  CodecConfig cfg;
  cfg.mid_channels = r.u32();
  cfg.latent_channels = r.u32();
  cfg.downsampling = r.u32();
  cfg.lambda = r.f64();
  CodecModel<T> model(cfg);
  auto params = model.parameters();
  const std::uint32_t count = r.u32();
  if (count != params.size()) throw FormatError("checkpoint: expected " + std::to_string(params.size()) + " tensors, found " + std::to_string(count));
  for (auto& [name, p] : params) {
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != p->shape) throw FormatError("checkpoint: tensor " + name + " has shape " + shape_str(shape) + ", expected " + shape_str(p->shape));
    for (auto& v : p->data) v = static_cast<T>(r.f32());
    if (!p->all_finite()) throw FormatError("checkpoint: tensor " + name + " holds non-finite values");
  }
  const std::uint64_t id = r.u64();
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  if (id != model.model_id()) throw FormatError("checkpoint: model id does not match parameter bytes");
  return model;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

template <typename T>
void save_checkpoint(const CodecModel<T>& model, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(model));
}

template <typename T = float>
CodecModel<T> load_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint<T>(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace rdsc
