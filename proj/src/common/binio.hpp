#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "peakforge/error.hpp"
#include "peakforge/tensor.hpp"

// Little-endian primitives for the "PFNN" binary container shared by network
// checkpoints and dataset dumps.
namespace peakforge::binio {

inline constexpr char kMagic[4] = {'P', 'F', 'N', 'N'};

inline void put_u32(std::ostream& f, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  f.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& f, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(f, v);
}

inline std::uint32_t get_u32(std::istream& f, const std::string& what) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated " + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& f, const std::string& what) {
  unsigned char b[8];
  if (!f.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& f, const std::string& what) {
  const std::uint64_t v = get_u64(f, what);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

inline void put_tensor(std::ostream& f, const nn::Tensor& t) {
  put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
  for (std::size_t d : t.shape) put_u64(f, d);
  for (double v : t.data) put_f64(f, v);
}

inline nn::Tensor read_tensor(std::istream& f, const std::string& what) {
  const std::uint32_t ndim = get_u32(f, what);
  std::vector<std::size_t> shape(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i)
    shape[i] = static_cast<std::size_t>(get_u64(f, what));
  nn::Tensor t(std::move(shape));
  for (double& v : t.data) v = get_f64(f, what);
  return t;
}

}  // namespace peakforge::binio
