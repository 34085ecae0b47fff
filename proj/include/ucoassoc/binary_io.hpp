#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "ucoassoc/error.hpp"

namespace ucoassoc::binary {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written from host memory");

template <typename T>
void put(std::ostream& os, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  os.write(buf, sizeof(T));
}

inline void put_bytes(std::ostream& os, const void* data, std::size_t n) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

/// Reads fixed-width little-endian values; any short read is a format error.
class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  template <typename T>
  T get() {
    T value;
    get_bytes(&value, sizeof(T));
    return value;
  }

  void get_bytes(void* out, std::size_t n) {
    is_.read(static_cast<char*>(out), static_cast<std::streamsize>(n));
    require(static_cast<std::size_t>(is_.gcount()) == n, ErrorKind::kFormat,
            what_ + ": truncated file");
  }

  void expect_end() {
    require(is_.peek() == std::char_traits<char>::eof(), ErrorKind::kFormat,
            what_ + ": trailing bytes after payload");
  }

 private:
  std::istream& is_;
  std::string what_;
};

}  // namespace ucoassoc::binary
