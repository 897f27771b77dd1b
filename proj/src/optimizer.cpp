#include "rmldp/optimizer.hpp"

#include <cmath>

namespace rmldp {

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + text + "' (expected sgd|adam)");
}

const char* to_string(OptimizerKind kind) {
  return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

ParamSet optimizer_step(OptimizerKind kind, const ParamSet& params, const GradMap& grads,
                        double lr, OptimizerState& state, const AdamConfig& adam) {
  if (!(lr > 0)) throw ConfigError("optimizer_step: learning rate must be positive");
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) {
      throw Error("optimizer_step: gradient for unknown parameter '" + name + "'");
    }
    if (g.size() != params.at(name).size()) {
      throw ShapeError("optimizer_step: gradient shape " + shape_string(g.shape()) +
                       " does not match parameter '" + name + "' " +
                       shape_string(params.at(name).shape()));
    }
  }
  if (kind == OptimizerKind::adam) ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(adam.beta1, t);
  const double correction2 = 1.0 - std::pow(adam.beta2, t);

  ParamSet out;
  for (const auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) {
      out.set(name, p.detach());
      continue;
    }
    auto pv = p.values();
    auto gv = git->second.values();
    std::vector<double> next(pv.begin(), pv.end());
    if (kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < next.size(); ++i) next[i] -= lr * gv[i];
    } else {
      auto& m = state.first_moment[name];
      auto& v = state.second_moment[name];
      if (m.empty() && v.empty()) {
        m.assign(next.size(), 0.0);
        v.assign(next.size(), 0.0);
      }
      if (m.size() != next.size() || v.size() != next.size()) {
        throw ShapeError("optimizer_step: adam state for '" + name + "' has " +
                         std::to_string(m.size()) + " entries, parameter has " +
                         std::to_string(next.size()));
      }
      for (std::size_t i = 0; i < next.size(); ++i) {
        m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * gv[i];
        v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * gv[i] * gv[i];
        const double mhat = m[i] / correction1;
        const double vhat = v[i] / correction2;
        next[i] -= lr * mhat / (std::sqrt(vhat) + adam.epsilon);
      }
    }
    out.set(name, Tensor(p.shape(), std::move(next)));
  }
  return out;
}

}  // namespace rmldp
