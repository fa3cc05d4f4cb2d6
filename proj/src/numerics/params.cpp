#include "trustalign/numerics/params.hpp"

#include "trustalign/errors.hpp"

namespace trustalign::numerics {

void ParameterSet::add(std::string name, Tensor value, bool trainable) {
  require(!contains(name), "duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(value), trainable});
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw ValidationError("unknown parameter '" + name + "'");
}

const Tensor& ParameterSet::get(const std::string& name) const {
  return entries_[index_of(name)].value;
}

Tensor& ParameterSet::get(const std::string& name) { return entries_[index_of(name)].value; }

void ParameterSet::set_trainable(const std::string& name, bool trainable) {
  entries_[index_of(name)].trainable = trainable;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

GradientMap scaled(const GradientMap& grads, double factor) {
  GradientMap out;
  for (const auto& [name, g] : grads) {
    Tensor t = g;
    for (double& v : t.data()) v *= factor;
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace trustalign::numerics
