#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rig/keyvalue.hpp"
#include "rig/nn/tensor.hpp"

// Procedural depth-completion samples and their file formats.
namespace rig::data {

using nn::FeatureMap;
using Mask = std::vector<std::uint8_t>;  // H*W flags, nonzero = valid

struct Sample {
  FeatureMap<float> color;   // 3 x H x W in [0, 1]
  FeatureMap<float> gt;      // 1 x H x W meters, positive wherever gt_mask is set
  Mask gt_mask;
  FeatureMap<float> sparse;  // 1 x H x W meters, zero where not sampled
  Mask input_mask;

  std::size_t height() const { return gt.height(); }
  std::size_t width() const { return gt.width(); }
  /// Throws std::logic_error naming the first violated invariant.
  void check_invariants() const;
};

struct DatasetSpec {
  std::size_t count = 64;
  std::size_t height = 64;
  std::size_t width = 64;
  double sample_rate = 0.05;  // rho, expected fraction of GT pixels kept as input
  double gt_density = 0.9;
  double max_depth = 10.0;    // meters
  std::uint64_t seed = 1;

  void validate() const;
  kv::Pairs to_pairs() const;
  static DatasetSpec from_reader(kv::Reader& reader);
};

/// Ground plane plus 3-8 boxes and spheres, depth-buffered under an
/// orthographic view. Pure in (spec.seed, index).
Sample gen_scene(const DatasetSpec& spec, std::size_t index);

struct SparseDepth {
  FeatureMap<float> depth;
  Mask mask;
};

/// Keeps each GT-valid pixel independently with probability rho. Throws
/// std::invalid_argument when rho is outside (0, 1] or no GT pixel is valid.
SparseDepth sparsify(const FeatureMap<float>& gt, const Mask& gt_mask, double rho,
                     std::uint64_t seed);

// .dmap: "DMAP", u32 version (1), u32 C, H, W, f32 payload, u64 FNV-1a of all
// preceding bytes. All integers little-endian.
std::string encode_dmap(const FeatureMap<float>& map);
/// Throws io::FormatError with a kind per failure (magic, version, truncated,
/// malformed, checksum).
FeatureMap<float> decode_dmap(std::string_view bytes);
void write_dmap(const std::filesystem::path& path, const FeatureMap<float>& map);
FeatureMap<float> read_dmap(const std::filesystem::path& path);

FeatureMap<float> mask_to_map(const Mask& mask, std::size_t height, std::size_t width);
Mask map_to_mask(const FeatureMap<float>& map);

/// 16-bit grayscale pixel for a depth in meters: round(d * 256) clamped to [0, 65535].
std::uint16_t depth_to_pixel(double meters);
double pixel_to_depth(std::uint16_t pixel);
/// Binary "P5" with maxval 65535 and big-endian samples; single-channel maps only.
std::string encode_pnm16(const FeatureMap<float>& depth);
void write_pnm16(const std::filesystem::path& path, const FeatureMap<float>& depth);
/// Reads back a file produced by encode_pnm16 as raw pixel values.
std::vector<std::uint16_t> decode_pnm16(std::string_view bytes, std::size_t& height,
                                        std::size_t& width);

struct ManifestEntry {
  std::size_t index = 0;
  std::string color_path, sparse_path, gt_path, mask_path;  // relative to the dataset dir
};

inline constexpr const char* kManifestHeader = "index,color_path,sparse_path,gt_path,mask_path";
inline constexpr const char* kManifestName = "manifest.csv";
inline constexpr const char* kSpecName = "dataset.cfg";

/// Writes spec.count samples as .dmap files plus manifest and spec echo.
std::vector<ManifestEntry> write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);
Sample load_sample(const std::filesystem::path& dir, const ManifestEntry& entry);
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

/// In-memory equivalent of write_dataset followed by load_dataset.
std::vector<Sample> generate(const DatasetSpec& spec);

}  // namespace rig::data
