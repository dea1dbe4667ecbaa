#pragma once

// Binary parameter container, self-contained for inference:
//
//   magic   "SFPM"                         4 bytes
//   version u32 little-endian              currently 1
//   meta    u64 length + that many bytes   JSON {"config": ..., "vocab": [...]}
//   count   u32                            number of named tensors
//   tensor  u32 name_len, name bytes, u32 rows, u32 cols,
//           rows*cols IEEE-754 doubles little-endian
//
// Tensors appear in registry order; names are shape-checked on load.

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "spanforge/model.hpp"
#include "spanforge/tokenizer.hpp"

namespace spanforge {

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw IoError("truncated parameter file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline void save_params(std::ostream& os, const ModelParams& p,
                        const Vocab& vocab,
                        const json& extra_meta = json::object()) {
  os.write("SFPM", 4);
  detail::put_le<uint32_t>(os, 1);
  json jm{{"config", p.cfg.to_json()}, {"vocab", vocab.all()}};
  for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it)
    jm[it.key()] = it.value();
  std::string meta = jm.dump();
  detail::put_le<uint64_t>(os, meta.size());
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::put_le<uint32_t>(os, static_cast<uint32_t>(p.tensors.size()));
  for (size_t t = 0; t < p.tensors.size(); ++t) {
    const std::string& name = p.names[t];
    detail::put_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Mat& m = p.tensors[t];
    detail::put_le<uint32_t>(os, static_cast<uint32_t>(m.rows));
    detail::put_le<uint32_t>(os, static_cast<uint32_t>(m.cols));
    for (double v : m.a) detail::put_le<double>(os, v);
  }
  if (!os) throw IoError("failed writing parameter file");
}

inline void save_params(const std::string& path, const ModelParams& p,
                        const Vocab& vocab,
                        const json& extra_meta = json::object()) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  save_params(os, p, vocab, extra_meta);
}

struct LoadedParams {
  ModelParams params;
  Vocab vocab;
};

inline LoadedParams load_params(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SFPM", 4) != 0)
    throw IoError("not a parameter file (bad magic)");
  uint32_t version = detail::get_le<uint32_t>(is);
  if (version != 1) throw IoError("unsupported parameter file version");
  uint64_t meta_len = detail::get_le<uint64_t>(is);
  std::string meta(meta_len, '\0');
  is.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw IoError("truncated parameter file");
  json jm;
  try {
    jm = json::parse(meta);
  } catch (const json::exception& e) {
    throw IoError(std::string("bad metadata: ") + e.what());
  }

  LoadedParams out{
      ModelParams::make(ModelConfig::from_json(jm.at("config"))),
      Vocab(jm.at("vocab").get<std::vector<std::string>>())};
  // Vocab(all tokens) re-adds the reserved names first; verify round trip
  std::vector<std::string> want = jm.at("vocab").get<std::vector<std::string>>();
  if (out.vocab.all() != want) throw IoError("vocab list not in id order");

  uint32_t count = detail::get_le<uint32_t>(is);
  if (count != out.params.tensors.size())
    throw IoError("tensor count mismatch");
  for (uint32_t t = 0; t < count; ++t) {
    uint32_t name_len = detail::get_le<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw IoError("truncated parameter file");
    if (name != out.params.names[t])
      throw IoError("unexpected tensor: " + name);
    uint32_t rows = detail::get_le<uint32_t>(is);
    uint32_t cols = detail::get_le<uint32_t>(is);
    Mat& m = out.params.tensors[t];
    if (static_cast<int>(rows) != m.rows || static_cast<int>(cols) != m.cols)
      throw IoError("shape mismatch for tensor: " + name);
    for (double& v : m.a) v = detail::get_le<double>(is);
  }
  return out;
}

inline LoadedParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return load_params(is);
}

}  // namespace spanforge
