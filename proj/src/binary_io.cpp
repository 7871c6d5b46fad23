#include "autopool/binary_io.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

namespace autopool::io {

void Writer::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes_.data()),
            static_cast<std::streamsize>(bytes_.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path.string());
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Reader Reader::from_file(const std::filesystem::path& path) {
  return Reader(read_file_bytes(path));
}

void Reader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n)
    throw Error(ErrorCode::kTruncatedFile, "needed " + std::to_string(n) + " bytes at offset " +
                                               std::to_string(pos_));
}

void Reader::expect_magic(std::string_view m) {
  if (bytes_.size() - pos_ < m.size() ||
      std::memcmp(bytes_.data() + pos_, m.data(), m.size()) != 0)
    throw Error(ErrorCode::kBadMagic, "expected magic \"" + std::string(m) + "\"");
  pos_ += m.size();
}

void Reader::expect_end() const {
  if (pos_ != bytes_.size())
    throw Error(ErrorCode::kTrailingBytes,
                std::to_string(bytes_.size() - pos_) + " unexpected bytes after payload");
}

std::string file_checksum(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace autopool::io
