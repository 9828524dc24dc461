#include "rig/model.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "rig/io.hpp"
#include "rig/nn/random.hpp"

namespace rig::model {

std::vector<std::size_t> RigNetConfig::resolved_fusion_levels() const {
  if (!fusion_levels.empty()) {
    std::vector<std::size_t> out = fusion_levels;
    std::sort(out.begin(), out.end());
    return out;
  }
  std::vector<std::size_t> out;
  const std::size_t top = std::min<std::size_t>(4, hourglass.levels - 1);
  for (std::size_t j = 1; j <= top; ++j) out.push_back(j);
  return out;
}

void RigNetConfig::validate() const {
  hourglass.validate();
  if (rg_repetitions == 0) throw std::invalid_argument("rignet: rg_repetitions must be >= 1");
  if (stem_window == 0 || stem_window % 2 == 0) {
    throw std::invalid_argument("rignet: stem_window must be odd");
  }
  if (guidance_options.window == 0 || guidance_options.window % 2 == 0) {
    throw std::invalid_argument("rignet: guidance window must be odd");
  }
  if (guidance_options.generator_window == 0 || guidance_options.generator_window % 2 == 0) {
    throw std::invalid_argument("rignet: generator window must be odd");
  }
  std::vector<std::size_t> levels = resolved_fusion_levels();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] < 1 || levels[i] > hourglass.levels) {
      throw std::invalid_argument("rignet: fusion level " + std::to_string(levels[i]) +
                                  " outside 1.." + std::to_string(hourglass.levels));
    }
    if (i > 0 && levels[i] == levels[i - 1]) {
      throw std::invalid_argument("rignet: duplicate fusion level " + std::to_string(levels[i]));
    }
  }
}

kv::Pairs RigNetConfig::to_pairs() const {
  std::string lv;
  for (std::size_t j : resolved_fusion_levels()) lv += (lv.empty() ? "" : ",") + std::to_string(j);
  return {
      {"model.levels", std::to_string(hourglass.levels)},
      {"model.base_channels", std::to_string(hourglass.base_channels)},
      {"model.rhn_repetitions", std::to_string(hourglass.repetitions)},
      {"model.encoder_depth", std::to_string(hourglass.encoder_depth)},
      {"model.channel_cap", std::to_string(hourglass.channel_cap)},
      {"model.use_bias", hourglass.use_bias ? "true" : "false"},
      {"model.rg_repetitions", std::to_string(rg_repetitions)},
      {"model.fusion", guidance::to_string(fusion)},
      {"model.guidance", guidance::to_string(guidance)},
      {"model.fusion_levels", lv},
      {"model.stem_window", std::to_string(stem_window)},
      {"model.window", std::to_string(guidance_options.window)},
      {"model.generator_window", std::to_string(guidance_options.generator_window)},
      {"model.dynamic_budget_bytes", std::to_string(guidance_options.dynamic_budget_bytes)},
  };
}

RigNetConfig RigNetConfig::from_reader(kv::Reader& r) {
  RigNetConfig c;
  c.hourglass.levels = r.get_size("model.levels", c.hourglass.levels);
  c.hourglass.base_channels = r.get_size("model.base_channels", c.hourglass.base_channels);
  c.hourglass.repetitions = r.get_size("model.rhn_repetitions", c.hourglass.repetitions);
  c.hourglass.encoder_depth = r.get_size("model.encoder_depth", c.hourglass.encoder_depth);
  c.hourglass.channel_cap = r.get_size("model.channel_cap", c.hourglass.channel_cap);
  c.hourglass.use_bias = r.get_bool("model.use_bias", c.hourglass.use_bias);
  c.rg_repetitions = r.get_size("model.rg_repetitions", c.rg_repetitions);
  c.fusion = guidance::parse_fusion_mode(r.get_string("model.fusion", guidance::to_string(c.fusion)));
  c.guidance =
      guidance::parse_guidance_kind(r.get_string("model.guidance", guidance::to_string(c.guidance)));
  c.fusion_levels = r.get_size_list("model.fusion_levels", c.fusion_levels);
  c.stem_window = r.get_size("model.stem_window", c.stem_window);
  c.guidance_options.window = r.get_size("model.window", c.guidance_options.window);
  c.guidance_options.generator_window =
      r.get_size("model.generator_window", c.guidance_options.generator_window);
  c.guidance_options.dynamic_budget_bytes =
      r.get_size("model.dynamic_budget_bytes", c.guidance_options.dynamic_budget_bytes);
  c.guidance_options.use_bias = c.hourglass.use_bias;
  c.validate();
  return c;
}

namespace {

RigNetConfig checked(RigNetConfig cfg) {
  cfg.guidance_options.use_bias = cfg.hourglass.use_bias;
  cfg.validate();
  return cfg;
}

}  // namespace

template <class T>
RigNet<T>::RigNet(const RigNetConfig& cfg, std::uint64_t seed)
    : cfg_(checked(cfg)),
      params_(seed),
      levels_(cfg_.resolved_fusion_levels()),
      color_stem_(params_, "color.stem", 3, cfg_.hourglass.channels_at(1), cfg_.stem_window, 1,
                  cfg_.hourglass.use_bias),
      color_rhn_(params_, "color", cfg_.hourglass, cfg_.hourglass.channels_at(1)),
      depth_stem_(params_, "depth.stem", 2, cfg_.hourglass.channels_at(1), cfg_.stem_window, 1,
                  cfg_.hourglass.use_bias),
      depth_rhn_(params_, "depth.rhn", cfg_.hourglass, cfg_.hourglass.channels_at(1)) {
  for (std::size_t j : levels_) {
    stages_.emplace_back(params_, "depth.rg" + std::to_string(j), cfg_.hourglass.channels_at(j),
                         cfg_.rg_repetitions, cfg_.guidance, cfg_.fusion, cfg_.guidance_options);
  }
  head_ = nn::Conv2d<T>(params_, "depth.head", cfg_.hourglass.channels_at(1), 1, 3, 1,
                        cfg_.hourglass.use_bias);
}

template <class T>
Var<T> RigNet<T>::forward(const Tensor<T>& color, const Tensor<T>& sparse,
                          std::span<const std::uint8_t> mask, ForwardTrace<T>* trace) const {
  nn::require_feature_map(color, "rignet color");
  nn::require_feature_map(sparse, "rignet sparse depth");
  const std::size_t h = color.height(), w = color.width();
  if (color.channels() != 3) throw std::invalid_argument("rignet: color must have 3 channels");
  if (sparse.dims() != std::vector<std::size_t>{1, h, w}) {
    throw std::invalid_argument("rignet: sparse depth must be 1 x " + std::to_string(h) + " x " +
                                std::to_string(w) + ", got " + nn::shape_string(sparse.dims()));
  }
  if (mask.size() != h * w) throw std::invalid_argument("rignet: mask size mismatch");
  cfg_.hourglass.validate_input(h, w);

  Tensor<T> depth_in({2, h, w});
  for (std::size_t p = 0; p < h * w; ++p) {
    if (!mask[p] && sparse[p] != T(0)) {
      throw std::invalid_argument("rignet: sparse depth must be zero at unmeasured pixels");
    }
    depth_in[p] = sparse[p];
    depth_in[h * w + p] = mask[p] ? T(1) : T(0);
  }

  std::vector<hourglass::HourglassState<T>> guides =
      color_rhn_.forward_all(nn::relu(color_stem_(Var<T>::constant(color))));
  const hourglass::HourglassState<T>& guide = guides.back();

  std::vector<guidance::GuidanceStage<T>> stages(levels_.size());
  guidance::Footprint footprint;
  hourglass::EncoderHook<T> hook = [&](std::size_t level, const Var<T>& encoded) -> Var<T> {
    const auto it = std::find(levels_.begin(), levels_.end(), level);
    if (it == levels_.end()) return encoded;
    const std::size_t s = static_cast<std::size_t>(it - levels_.begin());
    return stages_[s].forward(guide.decoder[level - 1], encoded, &stages[s], &footprint);
  };
  hourglass::HourglassState<T> depth_state =
      depth_rhn_.forward(nn::relu(depth_stem_(Var<T>::constant(std::move(depth_in)))), nullptr, hook);
  Var<T> out = head_(depth_state.decoder[0]);

  if (trace != nullptr) {
    trace->guidance_states = std::move(guides);
    trace->depth_state = std::move(depth_state);
    trace->stages = std::move(stages);
    trace->footprint = footprint;
  }
  return out;
}

template class RigNet<float>;
template class RigNet<double>;

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr std::string_view kMagic = "RIG1";
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  io::ByteWriter out;
  out.put_string(kMagic);
  out.put_u32(static_cast<std::uint32_t>(ckpt.config_text.size()));
  out.put_string(ckpt.config_text);
  out.put_u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    out.put_u32(static_cast<std::uint32_t>(t.name.size()));
    out.put_string(t.name);
    out.put_u32(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.dims()) out.put_u32(static_cast<std::uint32_t>(d));
    out.put_f32s(t.value.values());
  }
  const std::uint64_t sum = nn::fnv1a64(out.bytes().data(), out.size());
  out.put_u64(sum);
  return out.bytes();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  using io::FormatError;
  using io::FormatErrorKind;
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw FormatError(FormatErrorKind::bad_magic, "not a RIG1 checkpoint");
  }
  if (bytes.size() < kMagic.size() + 8) throw FormatError(FormatErrorKind::truncated, "checkpoint");
  const std::string_view payload = bytes.substr(0, bytes.size() - 8);
  io::ByteReader tail(bytes.substr(bytes.size() - 8));
  const std::uint64_t stored = tail.get_u64();

  io::ByteReader in(payload);
  in.get_bytes(kMagic.size());
  Checkpoint ckpt;
  // Parse before checking the sum so a short file reports truncation rather
  // than a checksum mismatch.
  ckpt.config_text = std::string(in.get_bytes(in.get_u32()));
  const std::uint32_t count = in.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = std::string(in.get_bytes(in.get_u32()));
    const std::uint32_t rank = in.get_u32();
    if (rank < 1 || rank > 4) {
      throw FormatError(FormatErrorKind::malformed,
                        "tensor '" + t.name + "' has rank " + std::to_string(rank));
    }
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = in.get_u32();
    t.value = Tensor<float>(dims);
    in.get_f32s(t.value.values());
    ckpt.tensors.push_back(std::move(t));
  }
  if (nn::fnv1a64(payload.data(), payload.size()) != stored) {
    throw FormatError(FormatErrorKind::checksum_mismatch, "checkpoint payload");
  }
  if (in.remaining() != 0) {
    throw FormatError(FormatErrorKind::malformed, "trailing bytes after tensors");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

Checkpoint snapshot(const RigNet<float>& net) {
  Checkpoint ckpt;
  ckpt.config_text = kv::format(net.config().to_pairs()) +
                     "model.seed=" + std::to_string(net.seed()) + "\n";
  for (const auto& e : net.parameters().entries()) ckpt.tensors.push_back({e.name, e.var.value()});
  return ckpt;
}

void restore_parameters(RigNet<float>& net, const Checkpoint& ckpt) {
  for (auto& e : net.parameters().entries()) {
    const NamedTensor* t = ckpt.find(e.name);
    if (t == nullptr) throw std::invalid_argument("checkpoint lacks parameter '" + e.name + "'");
    if (t->value.dims() != e.var.value().dims()) {
      throw std::invalid_argument("checkpoint parameter '" + e.name + "' has shape " +
                                  nn::shape_string(t->value.dims()) + ", model expects " +
                                  nn::shape_string(e.var.value().dims()));
    }
    e.var.mutable_value() = t->value;
  }
}

RigNetConfig config_from_checkpoint(const Checkpoint& ckpt) {
  kv::Reader reader(kv::parse(ckpt.config_text));
  return RigNetConfig::from_reader(reader);
}

}  // namespace rig::model
