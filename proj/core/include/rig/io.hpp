#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

// Little-endian byte packing and whole-file helpers shared by the binary
// formats (.dmap, checkpoints).
namespace rig::io {

enum class FormatErrorKind { bad_magic, bad_version, checksum_mismatch, truncated, malformed, io };

std::string to_string(FormatErrorKind kind);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& message)
      : std::runtime_error(to_string(kind) + ": " + message), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

class ByteWriter {
 public:
  void put_bytes(const void* data, std::size_t size);
  void put_string(std::string_view s) { put_bytes(s.data(), s.size()); }
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f32(float v);
  void put_f32s(std::span<const float> values);

  const std::string& bytes() const noexcept { return buf_; }
  std::size_t size() const noexcept { return buf_.size(); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view get_bytes(std::size_t size);
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  float get_f32();
  void get_f32s(std::span<float> out);

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never observe a
/// half-written file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace rig::io
