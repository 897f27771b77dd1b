#include "rmldp/param_set.hpp"

#include <algorithm>

namespace rmldp {

void ParamSet::set(const std::string& name, Tensor value) {
  if (name.empty()) throw Error("ParamSet: empty parameter name");
  entries_.insert_or_assign(name, std::move(value));
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("ParamSet: no parameter named '" + name + "'");
  return it->second;
}

std::size_t ParamSet::total_dim() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(name);
  return out;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> out;
  out.reserve(total_dim());
  for (const auto& [name, t] : entries_) {
    auto v = t.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

ParamSet ParamSet::unflatten(std::span<const double> values) const {
  if (values.size() != total_dim()) {
    throw ShapeError("unflatten: expected " + std::to_string(total_dim()) + " values, got " +
                     std::to_string(values.size()));
  }
  ParamSet out;
  std::size_t offset = 0;
  for (const auto& [name, t] : entries_) {
    std::vector<double> chunk(values.begin() + static_cast<std::ptrdiff_t>(offset),
                              values.begin() + static_cast<std::ptrdiff_t>(offset + t.size()));
    offset += t.size();
    out.set(name, Tensor(t.shape(), std::move(chunk)));
  }
  return out;
}

ParamSet ParamSet::with_prefix(const std::string& prefix) const {
  ParamSet out;
  for (auto it = entries_.lower_bound(prefix);
       it != entries_.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it) {
    out.set(it->first, it->second);
  }
  return out;
}

ParamSet ParamSet::strip_prefix(const std::string& prefix) const {
  ParamSet out;
  for (const auto& [name, t] : with_prefix(prefix)) out.set(name.substr(prefix.size()), t);
  return out;
}

ParamSet ParamSet::add_prefix(const std::string& prefix) const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.set(prefix + name, t);
  return out;
}

void ParamSet::merge(const ParamSet& other) {
  for (const auto& [name, t] : other) set(name, t);
}

ParamSet ParamSet::watched(Tape& tape) const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.set(name, tape.leaf(name, t));
  return out;
}

ParamSet ParamSet::detached() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.set(name, t.detach());
  return out;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.shape() != b->second.shape()) return false;
    auto x = a->second.values();
    auto y = b->second.values();
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

}  // namespace rmldp
