#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mininet/blocks.hpp"

namespace mininet {

enum class Variant { Original, Medium, Small };
/// Finest disparity scale kept by the decoder: full, half, quarter, eighth.
enum class OutputRes { F, H, Q, E };

std::string to_string(Variant v);
std::string to_string(OutputRes r);
Variant parse_variant(const std::string& s);
OutputRes parse_output_res(const std::string& s);

struct DepthNetConfig {
  Variant variant = Variant::Original;
  OutputRes output_res = OutputRes::F;
  std::int64_t base_channels = 64;
  int iterations = 4;
  bool share_recurrent_weights = true;
  bool lightweight_decoder = true;
  int se_reduction = 16;

  /// Inverted residual blocks making up one recurrent module.
  std::vector<InvertedResidualConfig> module_blocks() const;
  /// Decoder stages from the coarsest upward, already truncated at output_res.
  std::vector<UpsampleBlockConfig> decoder_blocks() const;
  /// Number of disparity heads kept (F: 4, H: 3, Q: 2, E: 1).
  int num_heads() const;
  /// Ratio of input resolution to the deepest encoder feature.
  std::int64_t output_stride() const { return std::int64_t{1} << (iterations + 1); }
  /// Throws ConfigError if the structure or the input size is unsupported.
  void validate() const;
  void validate_input(std::int64_t height, std::int64_t width) const;

  bool operator==(const DepthNetConfig&) const = default;
};

template <typename T>
struct DepthNetOutput {
  /// Encoder features at strides 2, 4, ..., output_stride.
  std::vector<Tensor<T>> features;
  /// Head outputs at their native resolutions, coarsest first.
  std::vector<Tensor<T>> raw_disparities;
  /// Head outputs bilinearly resized to the input resolution, coarsest first.
  std::vector<Tensor<T>> disparities;
};

/// Recurrent-module encoder plus upsample-block decoder. The first conv
/// halves the input; each pass of the (shared) recurrent module halves it
/// again, and decoder stages reverse the process with skip connections from
/// the encoder.
template <typename T>
class DepthNet {
 public:
  DepthNet(DepthNetConfig cfg, Rng& rng);

  const DepthNetConfig& config() const { return cfg_; }

  std::vector<Tensor<T>> encoder_features(const Tensor<T>& image, Tape<T>* tape) const;
  DepthNetOutput<T> forward_all(const Tensor<T>& image, Tape<T>* tape) const;
  /// Disparity maps in (0,1), one per kept head, each at the input resolution.
  std::vector<Tensor<T>> forward(const Tensor<T>& image, Tape<T>* tape = nullptr) const {
    return forward_all(image, tape).disparities;
  }

  /// Every tensor owned by the network; shared module weights appear once.
  ParamList<T> parameters();
  std::int64_t parameter_count() { return trainable_count(parameters()); }

  /// Distinct recurrent-module weight sets (1 when shared, T otherwise).
  std::size_t module_instances() const { return modules_.size(); }
  const std::vector<InvertedResidual<T>>& module_at(std::size_t i) const { return modules_.at(i); }

 private:
  Tensor<T> run_module(const Tensor<T>& x, std::size_t iteration, Tape<T>* tape) const;

  DepthNetConfig cfg_;
  Conv2d<T> first_conv_;
  std::vector<std::vector<InvertedResidual<T>>> modules_;
  std::vector<UpsampleBlock<T>> decoder_;
};

extern template class DepthNet<float>;
extern template class DepthNet<double>;

}  // namespace mininet
