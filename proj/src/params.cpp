#include "wavegnn/params.hpp"

#include "wavegnn/errors.hpp"

namespace wavegnn {

void ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) {
    throw ContractError("duplicate parameter name '" + name + "'");
  }
  index_.emplace(name, entries_.size());
  entries_.push_back(Parameter{std::move(name), std::move(value), trainable});
}

bool ParamStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw ContractError("unknown parameter '" + std::string(name) + "'");
  }
  return it->second;
}

const Parameter& ParamStore::entry(std::string_view name) const {
  return entries_[index_of(name)];
}

std::span<double> ParamStore::values(std::size_t index) {
  return entries_.at(index).value.data();
}

void ParamStore::assign(std::string_view name, const Tensor& value) {
  Parameter& p = entries_[index_of(name)];
  if (p.value.shape() != value.shape()) {
    throw DimensionError("parameter '" + p.name + "' has shape " +
                         shape_to_string(p.value.shape()) + ", got " +
                         shape_to_string(value.shape()));
  }
  p.value = value;
}

void ParamStore::set_trainable(std::string_view name, bool trainable) {
  entries_[index_of(name)].trainable = trainable;
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t total = 0;
  for (const auto& p : entries_) {
    if (!trainable_only || p.trainable) total += p.value.numel();
  }
  return total;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& pa = a.entries_[i];
    const auto& pb = b.entries_[i];
    if (pa.name != pb.name || pa.trainable != pb.trainable ||
        !bitwise_equal(pa.value, pb.value)) {
      return false;
    }
  }
  return true;
}

GradientSet::GradientSet(const ParamStore& store) {
  grads_.reserve(store.size());
  for (const auto& p : store.entries()) grads_.emplace_back(p.value.shape());
}

void GradientSet::accumulate(const GradientSet& other, double scale) {
  if (other.grads_.size() != grads_.size()) {
    throw DimensionError("gradient sets of different sizes");
  }
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto dst = grads_[i].data();
    auto src = other.grads_[i].data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
  }
}

void GradientSet::scale(double factor) {
  for (auto& g : grads_) {
    for (double& v : g.data()) v *= factor;
  }
}

}  // namespace wavegnn
