#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "duplex/errors.hpp"
#include "duplex/model.hpp"

namespace duplex {

// Flat binary checkpoint, little-endian:
//   magic "DPXCKPT1"
//   u32 scalar_bytes (4 or 8)
//   8 x i32 model config (layers, dim, heads, dec_heads, max_len, ffn_dim,
//                         vocab_size, dense_dim)
//   u32 parameter count, then per parameter:
//     u32 name length, name bytes, i32 rows, i32 cols, raw values
// Save/load round-trips are bit-exact for matching scalar width.

namespace ckpt_detail {

constexpr char kMagic[9] = "DPXCKPT1";

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("truncated checkpoint: " + path);
  return v;
}

}  // namespace ckpt_detail

template <typename Real>
void save_checkpoint(const std::string& path, const Model<Real>& model) {
  namespace d = ckpt_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(d::kMagic, 8);
  d::write_pod<uint32_t>(out, sizeof(Real));
  const ModelConfig& c = model.cfg;
  for (int v : {c.n_layers, c.dim, c.n_heads, c.dec_heads, c.max_len, c.ffn_dim, c.vocab_size,
                c.dense_dim}) {
    d::write_pod<int32_t>(out, v);
  }
  d::write_pod<uint32_t>(out, static_cast<uint32_t>(model.params.count()));
  for (const auto& [name, t] : model.params.values) {
    d::write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    d::write_pod<int32_t>(out, t.rows());
    d::write_pod<int32_t>(out, t.cols());
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.size() * sizeof(Real)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

template <typename Real>
Model<Real> load_checkpoint(const std::string& path) {
  namespace d = ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, d::kMagic, 8) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  const auto scalar_bytes = d::read_pod<uint32_t>(in, path);
  if (scalar_bytes != sizeof(Real)) {
    throw DataError("checkpoint " + path + " uses " + std::to_string(scalar_bytes * 8) +
                    "-bit scalars; run precision must match");
  }
  Model<Real> m;
  m.cfg.n_layers = d::read_pod<int32_t>(in, path);
  m.cfg.dim = d::read_pod<int32_t>(in, path);
  m.cfg.n_heads = d::read_pod<int32_t>(in, path);
  m.cfg.dec_heads = d::read_pod<int32_t>(in, path);
  m.cfg.max_len = d::read_pod<int32_t>(in, path);
  m.cfg.ffn_dim = d::read_pod<int32_t>(in, path);
  m.cfg.vocab_size = d::read_pod<int32_t>(in, path);
  m.cfg.dense_dim = d::read_pod<int32_t>(in, path);
  m.cfg.validate();
  const auto n_params = d::read_pod<uint32_t>(in, path);
  for (uint32_t i = 0; i < n_params; ++i) {
    const auto name_len = d::read_pod<uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = d::read_pod<int32_t>(in, path);
    const auto cols = d::read_pod<int32_t>(in, path);
    if (!in || rows < 0 || cols < 0) throw DataError("corrupt checkpoint: " + path);
    Tensor<Real> t(rows, cols);
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.size() * sizeof(Real)));
    if (!in) throw DataError("truncated checkpoint: " + path);
    m.params.add(name, std::move(t));
  }
  return m;
}

}  // namespace duplex
