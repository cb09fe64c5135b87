#pragma once

// Little-endian binary writer/reader shared by the graph, checkpoint and
// embedding sidecar formats. Files are framed as
//   magic(8) | u32 version | u64 header_len | header JSON | payload | u32 crc32
// where the CRC covers every preceding byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace hgnn {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint32_t crc32_of(std::span<const unsigned char> bytes);

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  template <typename T>
  void put_array(std::span<const T> values) {
    const auto* p = reinterpret_cast<const unsigned char*>(values.data());
    buf_.insert(buf_.end(), p, p + values.size_bytes());
  }
  const std::vector<unsigned char>& bytes() const { return buf_; }
  std::vector<unsigned char>& bytes() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  std::string get_bytes(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  template <typename T>
  void get_array(std::span<T> out) {
    if (out.empty()) return;
    std::memcpy(out.data(), take(out.size_bytes()), out.size_bytes());
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const unsigned char* take(std::size_t n) {
    if (n > remaining()) throw FormatError("truncated file");
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

// Writes magic | version | header | payload | crc, via a temporary file and
// rename so readers never observe a partial file.
void write_framed(const std::filesystem::path& path, std::string_view magic,
                  std::uint32_t version, std::string_view header_json,
                  std::span<const unsigned char> payload);

struct Framed {
  std::uint32_t version = 0;
  std::string header_json;
  std::vector<unsigned char> payload;
};

// Verifies magic, version and checksum.
Framed read_framed(const std::filesystem::path& path, std::string_view magic,
                   std::uint32_t expected_version);

void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

}  // namespace hgnn
