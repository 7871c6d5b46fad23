#ifndef AUTOPOOL_BINARY_IO_HPP
#define AUTOPOOL_BINARY_IO_HPP

// Little-endian encode/decode helpers shared by the model and dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "autopool/error.hpp"

namespace autopool::io {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

class Writer {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  template <typename T>
  void put_array(const T* data, std::size_t n) {
    const auto* p = reinterpret_cast<const unsigned char*>(data);
    bytes_.insert(bytes_.end(), p, p + n * sizeof(T));
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<unsigned char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}
  static Reader from_file(const std::filesystem::path& path);

  void expect_magic(std::string_view m);
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <typename T>
  void get_array(T* out, std::size_t n) {
    need(n * sizeof(T));
    std::memcpy(out, bytes_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
  }
  void expect_end() const;
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;

  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

/// FNV-1a 64-bit digest of a file, rendered as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace autopool::io

#endif  // AUTOPOOL_BINARY_IO_HPP
