#include "mininet/depthnet.hpp"

namespace mininet {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Original: return "original";
    case Variant::Medium: return "medium";
    case Variant::Small: return "small";
  }
  return "?";
}

std::string to_string(OutputRes r) {
  switch (r) {
    case OutputRes::F: return "F";
    case OutputRes::H: return "H";
    case OutputRes::Q: return "Q";
    case OutputRes::E: return "E";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "original") return Variant::Original;
  if (s == "medium") return Variant::Medium;
  if (s == "small") return Variant::Small;
  throw ConfigError("unknown variant '" + s + "' (expected original|medium|small)");
}

OutputRes parse_output_res(const std::string& s) {
  if (s == "F") return OutputRes::F;
  if (s == "H") return OutputRes::H;
  if (s == "Q") return OutputRes::Q;
  if (s == "E") return OutputRes::E;
  throw ConfigError("unknown output resolution '" + s + "' (expected F|H|Q|E)");
}

std::vector<InvertedResidualConfig> DepthNetConfig::module_blocks() const {
  const auto c = base_channels;
  const int r = se_reduction;
  switch (variant) {
    case Variant::Original:
      return {{c, 2, 1, r}, {c, 2, 1, r}, {c, 2, 2, r}, {c, 4, 1, r}, {c, 4, 1, r}};
    case Variant::Medium:
      return {{c, 2, 2, r}, {c, 2, 1, r}};
    case Variant::Small:
      return {{c, 2, 2, r}};
  }
  return {};
}

int DepthNetConfig::num_heads() const {
  switch (output_res) {
    case OutputRes::F: return 4;
    case OutputRes::H: return 3;
    case OutputRes::Q: return 2;
    case OutputRes::E: return 1;
  }
  return 0;
}

std::vector<UpsampleBlockConfig> DepthNetConfig::decoder_blocks() const {
  // Stage k upsamples to stride 2^(iterations - k); the final stage reaches
  // stride 1 and has no encoder feature to concatenate. Heads sit at strides
  // 8, 4, 2, 1 and output_res drops the finest stages.
  const int stages = iterations + 1 - (4 - num_heads());
  std::vector<UpsampleBlockConfig> out;
  for (int k = 0; k < stages; ++k) {
    const int stride_log2 = iterations - k;
    out.push_back({base_channels, stride_log2 > 0, stride_log2 <= 3, lightweight_decoder});
  }
  return out;
}

void DepthNetConfig::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels must be positive");
  if (iterations < 3) throw ConfigError("iterations must be >= 3 so the stride-8 head exists");
  if (se_reduction < 1) throw ConfigError("se_reduction must be positive");
}

void DepthNetConfig::validate_input(std::int64_t height, std::int64_t width) const {
  const auto s = output_stride();
  if (height <= 0 || width <= 0 || height % s != 0 || width % s != 0) {
    throw ConfigError("input " + std::to_string(width) + "x" + std::to_string(height) + " is not divisible by " +
                      std::to_string(s));
  }
}

template <typename T>
DepthNet<T>::DepthNet(DepthNetConfig cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  first_conv_ = Conv2d<T>(3, cfg.base_channels, 3, {2, 1, 1}, true, rng);
  const std::size_t instances = cfg.share_recurrent_weights ? 1 : static_cast<std::size_t>(cfg.iterations);
  for (std::size_t i = 0; i < instances; ++i) {
    std::vector<InvertedResidual<T>> blocks;
    for (const auto& b : cfg.module_blocks()) blocks.emplace_back(b, rng);
    modules_.push_back(std::move(blocks));
  }
  for (const auto& d : cfg.decoder_blocks()) decoder_.emplace_back(d, rng);
}

template <typename T>
Tensor<T> DepthNet<T>::run_module(const Tensor<T>& x, std::size_t iteration, Tape<T>* tape) const {
  const auto& blocks = modules_[cfg_.share_recurrent_weights ? 0 : iteration];
  Tensor<T> h = x;
  for (const auto& b : blocks) h = b.forward(h, tape);
  return h;
}

template <typename T>
std::vector<Tensor<T>> DepthNet<T>::encoder_features(const Tensor<T>& image, Tape<T>* tape) const {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw InvalidShape("DepthNet expects an N x 3 x H x W image, got " + to_string(image.shape()));
  }
  cfg_.validate_input(image.dim(2), image.dim(3));
  std::vector<Tensor<T>> feats;
  feats.push_back(relu(first_conv_.forward(image, tape)));
  for (int i = 0; i < cfg_.iterations; ++i) {
    feats.push_back(run_module(feats.back(), static_cast<std::size_t>(i), tape));
  }
  return feats;
}

template <typename T>
DepthNetOutput<T> DepthNet<T>::forward_all(const Tensor<T>& image, Tape<T>* tape) const {
  DepthNetOutput<T> out;
  out.features = encoder_features(image, tape);
  const auto& f = out.features;
  Tensor<T> h = f.back();
  for (std::size_t k = 0; k < decoder_.size(); ++k) {
    const Tensor<T>* skip = nullptr;
    if (decoder_[k].config().has_skip) skip = &f[f.size() - 2 - k];
    auto o = decoder_[k].forward(h, skip, tape);
    h = o.features;
    if (!o.disparity.empty()) {
      out.raw_disparities.push_back(o.disparity);
      out.disparities.push_back(bilinear_resize(o.disparity, image.dim(2), image.dim(3)));
    }
  }
  return out;
}

template <typename T>
ParamList<T> DepthNet<T>::parameters() {
  ParamList<T> out;
  first_conv_.collect(out, "depth.conv1");
  for (std::size_t m = 0; m < modules_.size(); ++m) {
    const std::string prefix = cfg_.share_recurrent_weights ? "depth.module" : "depth.module" + std::to_string(m);
    for (std::size_t b = 0; b < modules_[m].size(); ++b) modules_[m][b].collect(out, prefix + ".block" + std::to_string(b));
  }
  for (std::size_t k = 0; k < decoder_.size(); ++k) decoder_[k].collect(out, "depth.up" + std::to_string(k));
  return out;
}

template class DepthNet<float>;
template class DepthNet<double>;

}  // namespace mininet
