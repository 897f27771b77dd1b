#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rmldp/param_set.hpp"

namespace rmldp {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& text);
const char* to_string(OptimizerKind kind);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates per parameter name, created lazily.
struct OptimizerState {
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

/// One update of `params` with `grads` (which may cover a subset of names).
/// sgd: p - lr g. adam: bias-corrected moment update.
ParamSet optimizer_step(OptimizerKind kind, const ParamSet& params, const GradMap& grads,
                        double lr, OptimizerState& state, const AdamConfig& adam = {});

}  // namespace rmldp
