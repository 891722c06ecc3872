#ifndef RULEGRAPH_BINARY_IO_H_
#define RULEGRAPH_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "rulegraph/common.h"

namespace rulegraph::binio {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void write(std::ostream& out, T value) {
  static_assert(std::is_arithmetic_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T read(std::istream& in, const char* what) {
  static_assert(std::is_arithmetic_v<T>);
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) {
    throw DataError(std::string("truncated file while reading ") + what);
  }
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void write_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
  char buf[4];
  if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw DataError(std::string("bad magic: expected ") + magic);
  }
}

inline void write_string(std::ostream& out, const std::string& s) {
  write<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
  auto n = read<std::uint32_t>(in, what);
  if (n > (1u << 24)) throw DataError(std::string("implausible string length in ") + what);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) {
    throw DataError(std::string("truncated file while reading ") + what);
  }
  return s;
}

}  // namespace rulegraph::binio

#endif  // RULEGRAPH_BINARY_IO_H_
