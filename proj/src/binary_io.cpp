#include "hgnn/binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace hgnn {

std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_framed(const std::filesystem::path& path, std::string_view magic,
                  std::uint32_t version, std::string_view header_json,
                  std::span<const unsigned char> payload) {
  ByteWriter w;
  w.put_bytes(magic);
  w.put<std::uint32_t>(version);
  w.put<std::uint64_t>(header_json.size());
  w.put_bytes(header_json);
  w.put_array(payload);
  w.put<std::uint32_t>(crc32_of(w.bytes()));
  const auto& b = w.bytes();
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

Framed read_framed(const std::filesystem::path& path, std::string_view magic,
                   std::uint32_t expected_version) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < magic.size() + 4 + 8 + 4) throw FormatError(path.string() + ": truncated file");
  if (std::string_view(reinterpret_cast<const char*>(bytes.data()), magic.size()) != magic) {
    throw FormatError(path.string() + ": bad magic, not a " + std::string(magic) + " file");
  }
  const std::span<const unsigned char> body(bytes.data(), bytes.size() - 4);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);

  ByteReader r(body);
  r.get_bytes(magic.size());
  Framed f;
  f.version = r.get<std::uint32_t>();
  if (f.version != expected_version) {
    throw FormatError(path.string() + ": version " + std::to_string(f.version) +
                      " not supported (expected " + std::to_string(expected_version) + ")");
  }
  const auto header_len = r.get<std::uint64_t>();
  if (header_len > r.remaining()) throw FormatError(path.string() + ": truncated file");
  if (crc32_of(body) != stored_crc) throw FormatError(path.string() + ": checksum mismatch");
  f.header_json = r.get_bytes(header_len);
  f.payload.resize(r.remaining());
  r.get_array(std::span<unsigned char>(f.payload));
  return f;
}

}  // namespace hgnn
