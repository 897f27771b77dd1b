#pragma once

#include <functional>
#include <string>

#include "rmldp/param_set.hpp"

namespace rmldp {

/// Builds a scalar loss from parameters. When the entries are tracked the loss
/// must be recorded on their tape; when they are plain values only the value is
/// read.
using ScalarFn = std::function<Tensor(const ParamSet&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_name;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Central-difference check of the tape gradient of `fn` at `params`.
/// Relative error per coordinate is |a - n| / max(1, |a|, |n|).
GradCheckResult grad_check(const ScalarFn& fn, const ParamSet& params, double step = 1e-5);

/// Same comparison against a caller-supplied analytic gradient.
GradCheckResult compare_with_finite_differences(const ScalarFn& fn, const ParamSet& params,
                                                const GradMap& analytic, double step = 1e-5);

}  // namespace rmldp
