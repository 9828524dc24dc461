#include "rig/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rig/io.hpp"
#include "rig/nn/random.hpp"

namespace rig::data {

using io::FormatError;
using io::FormatErrorKind;

void Sample::check_invariants() const {
  const std::size_t h = gt.height(), w = gt.width(), n = h * w;
  if (color.dims() != std::vector<std::size_t>{3, h, w}) throw std::logic_error("sample: color shape");
  if (sparse.dims() != gt.dims() || gt.channels() != 1) throw std::logic_error("sample: depth shape");
  if (gt_mask.size() != n || input_mask.size() != n) throw std::logic_error("sample: mask size");
  for (std::size_t p = 0; p < n; ++p) {
    if (input_mask[p] && !gt_mask[p]) throw std::logic_error("sample: sparse outside GT support");
    if (input_mask[p] && sparse[p] != gt[p]) throw std::logic_error("sample: sparse differs from GT");
    if (!input_mask[p] && sparse[p] != 0.0f) throw std::logic_error("sample: nonzero unsampled pixel");
    if (gt_mask[p] && !(gt[p] > 0.0f)) throw std::logic_error("sample: non-positive GT depth");
  }
}

void DatasetSpec::validate() const {
  if (count == 0) throw std::invalid_argument("dataset: count must be >= 1");
  if (height == 0 || width == 0) throw std::invalid_argument("dataset: empty image size");
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) {
    throw std::invalid_argument("dataset: sample_rate must be in (0, 1]");
  }
  if (!(gt_density > 0.0 && gt_density <= 1.0)) {
    throw std::invalid_argument("dataset: gt_density must be in (0, 1]");
  }
  if (!(max_depth > 0.0) || !std::isfinite(max_depth)) {
    throw std::invalid_argument("dataset: max_depth must be positive");
  }
}

kv::Pairs DatasetSpec::to_pairs() const {
  char rate[32], density[32], depth[32];
  std::snprintf(rate, sizeof rate, "%.17g", sample_rate);
  std::snprintf(density, sizeof density, "%.17g", gt_density);
  std::snprintf(depth, sizeof depth, "%.17g", max_depth);
  return {{"data.count", std::to_string(count)},   {"data.height", std::to_string(height)},
          {"data.width", std::to_string(width)},   {"data.sample_rate", rate},
          {"data.gt_density", density},            {"data.max_depth", depth},
          {"data.seed", std::to_string(seed)}};
}

DatasetSpec DatasetSpec::from_reader(kv::Reader& r) {
  DatasetSpec s;
  s.count = r.get_size("data.count", s.count);
  s.height = r.get_size("data.height", s.height);
  s.width = r.get_size("data.width", s.width);
  s.sample_rate = r.get_double("data.sample_rate", s.sample_rate);
  s.gt_density = r.get_double("data.gt_density", s.gt_density);
  s.max_depth = r.get_double("data.max_depth", s.max_depth);
  s.seed = r.get_u64("data.seed", s.seed);
  s.validate();
  return s;
}

namespace {

struct Surface {
  double depth;
  std::array<double, 3> albedo;
};

}  // namespace

Sample gen_scene(const DatasetSpec& spec, std::size_t index) {
  spec.validate();
  const std::size_t H = spec.height, W = spec.width;
  const double dmax = spec.max_depth;
  nn::Rng rng(nn::derive_seed(spec.seed, index, 0x5cee));

  std::vector<Surface> zbuf(H * W);
  const double near = 0.25 * dmax, far = 0.95 * dmax;
  const double tilt = rng.uniform(-0.05, 0.05) * dmax;
  const double stripe = rng.uniform(4.0, 10.0);
  const std::array<double, 3> ground{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                                     rng.uniform(0.3, 0.7)};
  for (std::size_t y = 0; y < H; ++y) {
    const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(H);
    for (std::size_t x = 0; x < W; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(W) - 0.5;
      const double band = 0.8 + 0.2 * std::sin(stripe * (1.0 / (far - (far - near) * v)) * dmax);
      zbuf[y * W + x] = {far - (far - near) * v + tilt * u,
                         {ground[0] * band, ground[1] * band, ground[2] * band}};
    }
  }

  const std::size_t objects = 3 + static_cast<std::size_t>(rng.below(6));
  for (std::size_t o = 0; o < objects; ++o) {
    const bool sphere = rng.bernoulli(0.5);
    const std::array<double, 3> albedo{rng.uniform(0.15, 1.0), rng.uniform(0.15, 1.0),
                                       rng.uniform(0.15, 1.0)};
    const double cx = rng.uniform(0.0, static_cast<double>(W));
    const double cy = rng.uniform(0.0, static_cast<double>(H));
    const double d = rng.uniform(0.15, 0.8) * dmax;
    if (sphere) {
      const double r = rng.uniform(0.08, 0.25) * static_cast<double>(std::min(H, W));
      const double bulge = rng.uniform(0.03, 0.1) * dmax;
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
          const double q = 1.0 - (dx * dx + dy * dy) / (r * r);
          if (q <= 0.0) continue;
          const double z = d - bulge * std::sqrt(q);
          Surface& s = zbuf[y * W + x];
          if (z < s.depth) s = {z, albedo};
        }
      }
    } else {
      const double hw = rng.uniform(0.06, 0.25) * static_cast<double>(W);
      const double hh = rng.uniform(0.06, 0.25) * static_cast<double>(H);
      const double gx = rng.uniform(-0.02, 0.02) * dmax / hw;
      const double gy = rng.uniform(-0.02, 0.02) * dmax / hh;
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
          if (std::fabs(dx) > hw || std::fabs(dy) > hh) continue;
          const double z = d + gx * dx + gy * dy;
          Surface& s = zbuf[y * W + x];
          if (z < s.depth) s = {z, albedo};
        }
      }
    }
  }

  Sample out;
  out.gt = FeatureMap<float>({1, H, W});
  out.color = FeatureMap<float>({3, H, W});
  out.gt_mask.assign(H * W, 1);
  for (std::size_t p = 0; p < H * W; ++p) {
    const double z = std::clamp(zbuf[p].depth, 0.05 * dmax, dmax);
    out.gt[p] = static_cast<float>(z);
    const double shade = 1.0 - 0.6 * z / dmax;
    for (std::size_t c = 0; c < 3; ++c) {
      const double noise = rng.uniform(-0.04, 0.04);
      out.color[c * H * W + p] =
          static_cast<float>(std::clamp(zbuf[p].albedo[c] * shade + noise, 0.0, 1.0));
    }
  }
  if (spec.gt_density < 1.0) {
    for (auto& m : out.gt_mask) m = rng.bernoulli(spec.gt_density) ? 1 : 0;
    // Keep at least one valid pixel so the sample is usable for training.
    if (std::find(out.gt_mask.begin(), out.gt_mask.end(), 1) == out.gt_mask.end()) {
      out.gt_mask[rng.below(H * W)] = 1;
    }
  }
  for (std::size_t p = 0; p < H * W; ++p) {
    if (!out.gt_mask[p]) out.gt[p] = 0.0f;
  }

  SparseDepth sp = sparsify(out.gt, out.gt_mask, spec.sample_rate,
                            nn::derive_seed(spec.seed, index, 0x5ba2));
  out.sparse = std::move(sp.depth);
  out.input_mask = std::move(sp.mask);
  return out;
}

SparseDepth sparsify(const FeatureMap<float>& gt, const Mask& gt_mask, double rho,
                     std::uint64_t seed) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("sparsify: rho must be in (0, 1]");
  if (gt.rank() != 3 || gt.channels() != 1) throw std::invalid_argument("sparsify: expected 1 x H x W");
  if (gt_mask.size() != gt.size()) throw std::invalid_argument("sparsify: mask size mismatch");
  if (std::find_if(gt_mask.begin(), gt_mask.end(), [](auto m) { return m != 0; }) == gt_mask.end()) {
    throw std::invalid_argument("sparsify: no valid ground-truth pixels");
  }
  SparseDepth out{FeatureMap<float>(gt.dims()), Mask(gt.size(), 0)};
  nn::Rng rng(seed);
  for (std::size_t p = 0; p < gt.size(); ++p) {
    if (!gt_mask[p]) continue;
    if (rho >= 1.0 || rng.bernoulli(rho)) {
      out.mask[p] = 1;
      out.depth[p] = gt[p];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// .dmap

namespace {
constexpr std::string_view kDmapMagic = "DMAP";
constexpr std::uint32_t kDmapVersion = 1;
constexpr std::size_t kDmapHeader = 4 + 4 * 4;
}  // namespace

std::string encode_dmap(const FeatureMap<float>& map) {
  nn::require_feature_map(map, "write_dmap");
  io::ByteWriter out;
  out.put_string(kDmapMagic);
  out.put_u32(kDmapVersion);
  for (std::size_t d : map.dims()) out.put_u32(static_cast<std::uint32_t>(d));
  out.put_f32s(map.values());
  out.put_u64(nn::fnv1a64(out.bytes().data(), out.size()));
  return out.bytes();
}

FeatureMap<float> decode_dmap(std::string_view bytes) {
  if (bytes.size() < kDmapMagic.size() || bytes.substr(0, 4) != kDmapMagic) {
    throw FormatError(FormatErrorKind::bad_magic, "not a DMAP file");
  }
  io::ByteReader in(bytes);
  in.get_bytes(4);
  const std::uint32_t version = in.get_u32();
  if (version != kDmapVersion) {
    throw FormatError(FormatErrorKind::bad_version, "dmap version " + std::to_string(version));
  }
  const std::uint64_t c = in.get_u32(), h = in.get_u32(), w = in.get_u32();
  if (c == 0 || h == 0 || w == 0) throw FormatError(FormatErrorKind::malformed, "zero dimension");
  const std::uint64_t expected = kDmapHeader + 4 * c * h * w + 8;
  if (bytes.size() < expected) {
    throw FormatError(FormatErrorKind::truncated, "dmap holds " + std::to_string(bytes.size()) +
                                                      " of " + std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) throw FormatError(FormatErrorKind::malformed, "trailing bytes");
  FeatureMap<float> map({static_cast<std::size_t>(c), static_cast<std::size_t>(h),
                         static_cast<std::size_t>(w)});
  in.get_f32s(map.values());
  const std::size_t body = in.position();
  if (in.get_u64() != nn::fnv1a64(bytes.data(), body)) {
    throw FormatError(FormatErrorKind::checksum_mismatch, "dmap payload");
  }
  return map;
}

void write_dmap(const std::filesystem::path& path, const FeatureMap<float>& map) {
  io::write_file(path, encode_dmap(map));
}

FeatureMap<float> read_dmap(const std::filesystem::path& path) {
  return decode_dmap(io::read_file(path));
}

FeatureMap<float> mask_to_map(const Mask& mask, std::size_t height, std::size_t width) {
  if (mask.size() != height * width) throw std::invalid_argument("mask_to_map: size mismatch");
  FeatureMap<float> out({1, height, width});
  for (std::size_t p = 0; p < mask.size(); ++p) out[p] = mask[p] ? 1.0f : 0.0f;
  return out;
}

Mask map_to_mask(const FeatureMap<float>& map) {
  Mask out(map.size());
  for (std::size_t p = 0; p < map.size(); ++p) {
    if (map[p] != 0.0f && map[p] != 1.0f) {
      throw std::invalid_argument("map_to_mask: values must be 0 or 1");
    }
    out[p] = map[p] != 0.0f ? 1 : 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// 16-bit PNM

std::uint16_t depth_to_pixel(double meters) {
  if (!(meters > 0.0)) return 0;  // also maps NaN to 0
  const double v = std::round(meters * 256.0);
  return static_cast<std::uint16_t>(std::min(v, 65535.0));
}

double pixel_to_depth(std::uint16_t pixel) { return static_cast<double>(pixel) / 256.0; }

std::string encode_pnm16(const FeatureMap<float>& depth) {
  if (depth.rank() != 3 || depth.channels() != 1) {
    throw std::invalid_argument("pnm export: expected a 1 x H x W depth map");
  }
  std::string out = "P5\n" + std::to_string(depth.width()) + " " + std::to_string(depth.height()) +
                    "\n65535\n";
  out.reserve(out.size() + 2 * depth.size());
  for (const float d : depth.values()) {
    const std::uint16_t px = depth_to_pixel(d);
    out.push_back(static_cast<char>(px >> 8));
    out.push_back(static_cast<char>(px & 0xFF));
  }
  return out;
}

void write_pnm16(const std::filesystem::path& path, const FeatureMap<float>& depth) {
  io::write_file(path, encode_pnm16(depth));
}

std::vector<std::uint16_t> decode_pnm16(std::string_view bytes, std::size_t& height,
                                        std::size_t& width) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  if (token() != "P5") throw FormatError(FormatErrorKind::bad_magic, "not a binary PGM");
  try {
    width = std::stoul(token());
    height = std::stoul(token());
    if (token() != "65535") throw FormatError(FormatErrorKind::malformed, "maxval must be 65535");
  } catch (const std::logic_error&) {
    throw FormatError(FormatErrorKind::malformed, "bad PGM header");
  }
  ++pos;  // single whitespace before the raster
  if (bytes.size() < pos + 2 * width * height) throw FormatError(FormatErrorKind::truncated, "PGM");
  std::vector<std::uint16_t> px(width * height);
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<std::uint16_t>((static_cast<unsigned char>(bytes[pos + 2 * i]) << 8) |
                                       static_cast<unsigned char>(bytes[pos + 2 * i + 1]));
  }
  return px;
}

// ---------------------------------------------------------------------------
// Dataset directories

namespace {

std::string sample_name(std::size_t index, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%05zu_%s.dmap", index, kind);
  return buf;
}

}  // namespace

std::vector<ManifestEntry> write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec) {
  spec.validate();
  std::filesystem::create_directories(dir);
  std::vector<ManifestEntry> entries;
  std::string manifest = std::string(kManifestHeader) + "\n";
  for (std::size_t i = 0; i < spec.count; ++i) {
    const Sample s = gen_scene(spec, i);
    ManifestEntry e{i, sample_name(i, "color"), sample_name(i, "sparse"), sample_name(i, "gt"),
                    sample_name(i, "mask")};
    write_dmap(dir / e.color_path, s.color);
    write_dmap(dir / e.sparse_path, s.sparse);
    write_dmap(dir / e.gt_path, s.gt);
    write_dmap(dir / e.mask_path, mask_to_map(s.gt_mask, s.height(), s.width()));
    manifest += std::to_string(i) + "," + e.color_path + "," + e.sparse_path + "," + e.gt_path +
                "," + e.mask_path + "\n";
    entries.push_back(std::move(e));
  }
  io::write_file(dir / kManifestName, manifest);
  io::write_file(dir / kSpecName, kv::format(spec.to_pairs()));
  return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir) {
  std::istringstream in(io::read_file(dir / kManifestName));
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw FormatError(FormatErrorKind::malformed, "manifest header must be '" +
                                                      std::string(kManifestHeader) + "'");
  }
  std::vector<ManifestEntry> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    if (fields.size() != 5) {
      throw FormatError(FormatErrorKind::malformed,
                        "manifest line " + std::to_string(line_no) + ": expected 5 fields");
    }
    ManifestEntry e;
    try {
      e.index = std::stoul(fields[0]);
    } catch (const std::logic_error&) {
      throw FormatError(FormatErrorKind::malformed, "manifest line " + std::to_string(line_no));
    }
    e.color_path = fields[1];
    e.sparse_path = fields[2];
    e.gt_path = fields[3];
    e.mask_path = fields[4];
    out.push_back(std::move(e));
  }
  return out;
}

Sample load_sample(const std::filesystem::path& dir, const ManifestEntry& e) {
  Sample s;
  s.color = read_dmap(dir / e.color_path);
  s.sparse = read_dmap(dir / e.sparse_path);
  s.gt = read_dmap(dir / e.gt_path);
  s.gt_mask = map_to_mask(read_dmap(dir / e.mask_path));
  s.input_mask.resize(s.sparse.size());
  for (std::size_t p = 0; p < s.sparse.size(); ++p) s.input_mask[p] = s.sparse[p] > 0.0f ? 1 : 0;
  s.check_invariants();
  return s;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  std::vector<Sample> out;
  for (const auto& e : read_manifest(dir)) out.push_back(load_sample(dir, e));
  if (out.empty()) throw std::invalid_argument("dataset " + dir.string() + " is empty");
  return out;
}

std::vector<Sample> generate(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(gen_scene(spec, i));
  return out;
}

}  // namespace rig::data
