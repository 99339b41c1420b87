#ifndef PHENOFLUX_SERIALIZATION_HPP
#define PHENOFLUX_SERIALIZATION_HPP

#include "phenoflux/core.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace phenoflux::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw Error("truncated binary file", ErrorKind::Validation);
  return value;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 32)) throw Error("implausible string length in binary file", ErrorKind::Validation);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw Error("truncated binary file", ErrorKind::Validation);
  return s;
}

// Matrices are written column-major as u64 rows, u64 cols, f64 data.
inline void put_matrix(std::ostream& os, const Matrix& m) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

inline Matrix get_matrix(std::istream& is) {
  const auto rows = static_cast<Index>(get<std::uint64_t>(is));
  const auto cols = static_cast<Index>(get<std::uint64_t>(is));
  Matrix m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!is) throw Error("truncated binary file", ErrorKind::Validation);
  return m;
}

inline void put_magic(std::ostream& os, const char (&magic)[6]) { os.write(magic, 5); }

inline void expect_magic(std::istream& is, const char (&magic)[6], const std::string& what) {
  char buf[5];
  is.read(buf, 5);
  if (!is || std::memcmp(buf, magic, 5) != 0) throw Error("not a " + std::string(magic) + " file: " + what, ErrorKind::Validation);
}

}  // namespace phenoflux::io

#endif  // PHENOFLUX_SERIALIZATION_HPP
