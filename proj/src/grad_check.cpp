#include "rmldp/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace rmldp {

GradCheckResult grad_check(const ScalarFn& fn, const ParamSet& params, double step) {
  GradMap analytic;
  {
    Tape tape;
    ParamSet tracked = params.watched(tape);
    Tensor loss = fn(tracked);
    analytic = tape.backward(loss);
  }
  return compare_with_finite_differences(fn, params, analytic, step);
}

GradCheckResult compare_with_finite_differences(const ScalarFn& fn, const ParamSet& params,
                                                const GradMap& analytic, double step) {
  if (!(step > 0)) throw ConfigError("grad_check: step must be positive");
  GradCheckResult result;
  ParamSet base = params.detached();
  for (const auto& [name, tensor] : base) {
    auto git = analytic.find(name);
    std::vector<double> values(tensor.values().begin(), tensor.values().end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      ParamSet probe = base;
      values[i] = original + step;
      probe.set(name, Tensor(tensor.shape(), values));
      const double plus = fn(probe).item();
      values[i] = original - step;
      probe.set(name, Tensor(tensor.shape(), values));
      const double minus = fn(probe).item();
      values[i] = original;

      const double numeric = (plus - minus) / (2.0 * step);
      const double a = git == analytic.end() ? 0.0 : git->second[i];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coordinates;
      if (result.coordinates == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_name = name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace rmldp
