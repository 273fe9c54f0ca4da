#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "cauvis/numerics/matrix.hpp"

// CMAT1 container: the 5 ASCII bytes "CMAT1", little-endian u32 rows, u32 cols,
// then rows·cols little-endian IEEE-754 doubles in row-major order.
namespace cauvis::cmat {

inline constexpr std::array<char, 5> kMagic{'C', 'M', 'A', 'T', '1'};

namespace detail {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("CMAT1: truncated stream");
  return to_little(v);
}

}  // namespace detail

inline void write(std::ostream& os, const Matrix& m) {
  os.write(kMagic.data(), kMagic.size());
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.rows()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) detail::put<double>(os, v);
  if (!os) throw IoError("CMAT1: write failed");
}

inline Matrix read(std::istream& is) {
  std::array<char, 5> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw IoError("CMAT1: bad magic");
  const auto rows = detail::get<std::uint32_t>(is);
  const auto cols = detail::get<std::uint32_t>(is);
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (double& v : data) v = detail::get<double>(is);
  return Matrix(rows, cols, std::move(data));
}

inline void save(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write(os, m);
}

inline Matrix load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read(is);
}

// Concatenated blobs, as used for dataset sample files.
inline void save_all(const std::filesystem::path& path, const std::vector<Matrix>& ms) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& m : ms) write(os, m);
}

inline std::vector<Matrix> load_all(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<Matrix> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read(is));
  return out;
}

}  // namespace cauvis::cmat
