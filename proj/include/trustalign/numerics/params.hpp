#pragma once

#include <map>
#include <string>
#include <vector>

#include "trustalign/numerics/tensor.hpp"

namespace trustalign::numerics {

/// Named tensors in declaration order. Frozen entries are carried along but
/// never bound as trainable leaves.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  void add(std::string name, Tensor value, bool trainable = true);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  void set_trainable(const std::string& name, bool trainable);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::size_t index_of(const std::string& name) const;
  std::vector<Entry> entries_;
};

/// Parameter name -> gradient, same shape as the parameter.
using GradientMap = std::map<std::string, Tensor>;

GradientMap scaled(const GradientMap& grads, double factor);

}  // namespace trustalign::numerics
