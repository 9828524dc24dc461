#include "rig/io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace rig::io {

std::string to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::bad_magic: return "bad magic";
    case FormatErrorKind::bad_version: return "unsupported version";
    case FormatErrorKind::checksum_mismatch: return "checksum mismatch";
    case FormatErrorKind::truncated: return "truncated";
    case FormatErrorKind::malformed: return "malformed";
    case FormatErrorKind::io: return "i/o error";
  }
  return "format error";
}

void ByteWriter::put_bytes(const void* data, std::size_t size) {
  buf_.append(static_cast<const char*>(data), size);
}

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_f32s(std::span<const float> values) {
  buf_.reserve(buf_.size() + 4 * values.size());
  for (const float v : values) put_f32(v);
}

std::string_view ByteReader::get_bytes(std::size_t size) {
  if (size > remaining()) {
    throw FormatError(FormatErrorKind::truncated,
                      "needed " + std::to_string(size) + " bytes at offset " +
                          std::to_string(pos_) + ", " + std::to_string(remaining()) + " left");
  }
  std::string_view out = bytes_.substr(pos_, size);
  pos_ += size;
  return out;
}

std::uint32_t ByteReader::get_u32() {
  const std::string_view b = get_bytes(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
  return v;
}

std::uint64_t ByteReader::get_u64() {
  const std::string_view b = get_bytes(8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
  return v;
}

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }

void ByteReader::get_f32s(std::span<float> out) {
  if (out.size() > remaining() / 4) {
    throw FormatError(FormatErrorKind::truncated,
                      "payload of " + std::to_string(out.size()) + " floats exceeds file");
  }
  for (float& v : out) v = get_f32();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw FormatError(FormatErrorKind::io, "read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrorKind::io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrorKind::io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError(FormatErrorKind::io, "rename to " + path.string() + ": " + ec.message());
}

}  // namespace rig::io
