#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "rmldp/tensor.hpp"

namespace rmldp {

/// Named collection of tensors, iterated in lexicographic name order.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void set(const std::string& name, Tensor value);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  /// Sum of element counts.
  std::size_t total_dim() const;

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  std::vector<std::string> names() const;

  std::vector<double> flatten() const;
  /// Inverse of flatten, using this set's names and shapes as the layout.
  ParamSet unflatten(std::span<const double> values) const;

  /// Entries whose name starts with `prefix`.
  ParamSet with_prefix(const std::string& prefix) const;
  /// Entries under `prefix`, renamed without it.
  ParamSet strip_prefix(const std::string& prefix) const;
  ParamSet add_prefix(const std::string& prefix) const;
  /// Copies every entry of `other`, replacing existing names.
  void merge(const ParamSet& other);

  /// Registers every entry as a named leaf on `tape`.
  ParamSet watched(Tape& tape) const;
  ParamSet detached() const;

  bool operator==(const ParamSet& other) const;

 private:
  Map entries_;
};

}  // namespace rmldp
