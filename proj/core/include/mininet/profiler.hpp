#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mininet/depthnet.hpp"

namespace mininet {

struct LayerRecord {
  std::string name;
  std::string kind;  // conv, fc, elementwise, pool, resample
  std::int64_t params = 0;
  std::int64_t macs = 0;
  /// Bias additions plus elementwise, pooling and resampling work.
  std::int64_t other_flops = 0;
  Shape output;

  std::int64_t flops() const { return 2 * macs + other_flops; }
};

struct FlopCount {
  std::int64_t macs = 0;
  std::int64_t other_flops = 0;
  std::vector<LayerRecord> breakdown;

  /// Multiply-accumulates counted as two operations.
  std::int64_t total() const { return 2 * macs + other_flops; }
  /// Multiply-accumulates counted as one operation.
  std::int64_t total_1mac() const { return macs + other_flops; }
};

struct ParamRecord {
  std::string name;
  std::int64_t count = 0;
};

struct ProfileReport {
  std::string label;
  std::int64_t input_h = 0, input_w = 0;
  std::int64_t params = 0;
  std::int64_t model_size_bytes = 0;
  FlopCount flops;
  std::vector<ParamRecord> param_breakdown;

  /// Decimal megabytes (10^6 bytes).
  double model_size_mb() const { return static_cast<double>(model_size_bytes) / 1e6; }
  double gflops() const { return static_cast<double>(flops.total()) / 1e9; }
  double gflops_1mac() const { return static_cast<double>(flops.total_1mac()) / 1e9; }
};

/// Trainable element count; shared recurrent weights are counted once. The
/// breakdown has one entry per parameter tensor.
template <typename T>
std::int64_t count_params(DepthNet<T>& net, std::vector<ParamRecord>* breakdown = nullptr);

/// 4 bytes per parameter.
constexpr std::int64_t model_size_bytes(std::int64_t params) { return 4 * params; }

/// Analytic per-layer count for one image of the given size.
FlopCount count_flops(const DepthNetConfig& cfg, std::int64_t input_h, std::int64_t input_w);

/// Builds the network (weights are irrelevant) and fills every field.
ProfileReport profile(const DepthNetConfig& cfg, std::int64_t input_h, std::int64_t input_w);

std::string config_label(const DepthNetConfig& cfg);

/// Comma-separated: label,params,params_M,size_MB,gflops_2mac,gflops_1mac.
std::string profile_table_csv(const std::vector<ProfileReport>& reports);
/// The same columns padded into aligned text.
std::string profile_table_text(const std::vector<ProfileReport>& reports);
/// Per-layer CSV of one report.
std::string breakdown_csv(const ProfileReport& report);

}  // namespace mininet
