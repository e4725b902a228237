#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "capmeter/nn.hpp"

namespace capmeter {

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
inline void put_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  auto bits = static_cast<std::uint64_t>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  put_bytes(os, buf, sizeof(T));
}

inline void put_f64_le(std::ostream& os, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof(bits));
  put_le<std::uint64_t>(os, bits);
}

template <typename T>
inline T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(bits);
}

inline double get_f64_le(std::istream& is) {
  const std::uint64_t bits = get_le<std::uint64_t>(is);
  double value;
  std::memcpy(&value, &bits, sizeof(value));
  return value;
}

inline void write_matrix(std::ostream& os, const DenseMatrix& m) {
  for (double v : m.data()) put_f64_le(os, v);
}

inline DenseMatrix read_matrix(std::istream& is, std::size_t rows,
                               std::size_t cols) {
  Vector data(rows * cols);
  for (double& v : data) v = get_f64_le(is);
  return DenseMatrix(rows, cols, std::move(data));
}

}  // namespace detail

/// Writes `content` to `path` atomically (temp file + rename).
inline void atomic_write_file(const std::string& path,
                              const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + tmp);
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Binary checkpoint: magic "CAPM", version u16, then d, h, c as u32
/// little-endian, then U, V, U0, V0 as row-major little-endian f64, then the
/// 64-bit seed. A JSON sidecar (<path>.json) carries shapes and provenance.
inline void save_checkpoint(const TwoLayerNet& net, const std::string& path,
                            nlohmann::ordered_json sidecar_extra = {}) {
  net.validate();
  std::ostringstream os(std::ios::binary);
  os.write("CAPM", 4);
  detail::put_le<std::uint16_t>(os, kCheckpointVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(net.input_dim()));
  detail::put_le<std::uint32_t>(os,
                                static_cast<std::uint32_t>(net.hidden_units()));
  detail::put_le<std::uint32_t>(os,
                                static_cast<std::uint32_t>(net.num_classes()));
  detail::write_matrix(os, net.U);
  detail::write_matrix(os, net.V);
  detail::write_matrix(os, net.U0);
  detail::write_matrix(os, net.V0);
  detail::put_le<std::uint64_t>(os, net.seed);
  atomic_write_file(path, os.str());

  nlohmann::ordered_json sidecar;
  sidecar["format"] = "capm";
  sidecar["version"] = kCheckpointVersion;
  sidecar["d"] = net.input_dim();
  sidecar["h"] = net.hidden_units();
  sidecar["c"] = net.num_classes();
  sidecar["seed"] = net.seed;
  if (sidecar_extra.is_object())
    for (auto& [key, value] : sidecar_extra.items()) sidecar[key] = value;
  atomic_write_file(path + ".json", sidecar.dump(2) + "\n");
}

inline TwoLayerNet load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "CAPM")
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = detail::get_le<std::uint16_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  const auto d = detail::get_le<std::uint32_t>(is);
  const auto h = detail::get_le<std::uint32_t>(is);
  const auto c = detail::get_le<std::uint32_t>(is);
  if (d == 0 || h == 0 || c == 0)
    throw std::runtime_error("checkpoint: zero dimension");
  TwoLayerNet net;
  net.U = detail::read_matrix(is, h, d);
  net.V = detail::read_matrix(is, c, h);
  net.U0 = detail::read_matrix(is, h, d);
  net.V0 = detail::read_matrix(is, c, h);
  net.seed = detail::get_le<std::uint64_t>(is);
  net.validate();
  return net;
}

}  // namespace capmeter
