#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mininet/tensor.hpp"

namespace mininet {

struct GradCheckConfig {
  /// Largest central-difference step; each probe also tries step / 10,
  /// step / 100, ... and keeps the most locally linear one.
  double step = 1e-4;
  int step_levels = 4;
  double tolerance = 1e-4;
  /// Entries probed per variable; smaller variables are probed exhaustively.
  int probes_per_tensor = 12;
  /// Relative errors are taken against max(|a|, |n|, floor) with
  /// floor = floor_fraction * (largest numerical gradient in the case).
  double floor_fraction = 1e-3;
  std::uint64_t seed = 7;
  /// Skip the end-to-end objective (the slowest case).
  bool include_end_to_end = true;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0;
  std::int64_t probes = 0;
  bool passed = false;
  /// Location and values of the worst probe.
  std::size_t worst_variable = 0;
  std::int64_t worst_index = 0;
  double worst_analytic = 0, worst_numeric = 0;
};

/// Builds a tensor from the current values of the variables, recording onto
/// `tape` when it is not null. Variables must be bound with bind(tape, ...).
using GradCheckFn = std::function<Tensor<double>(Tape<double>* tape)>;

/// Compares tape gradients of sum(R * f) against central differences, for a
/// fixed random R. Variables are perturbed in place and restored.
GradCheckResult gradcheck(const std::string& name, const std::vector<Tensor<double>*>& variables,
                          const GradCheckFn& f, const GradCheckConfig& cfg = {});

/// Every tensor op, each network block, projection and warping, every loss
/// term and one end-to-end training objective on a 16 x 32 synthetic scene.
std::vector<GradCheckResult> run_gradcheck_suite(const GradCheckConfig& cfg = {});

}  // namespace mininet
