#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wavegnn/tensor.hpp"

namespace wavegnn {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Named, insertion-ordered collection of model parameters. Shapes are fixed
/// once a parameter is added; only values change afterwards.
class ParamStore {
 public:
  void add(std::string name, Tensor value, bool trainable = true);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }

  const Parameter& entry(std::size_t index) const { return entries_.at(index); }
  const Parameter& entry(std::string_view name) const;
  const Tensor& value(std::string_view name) const { return entry(name).value; }

  /// Mutable view of a parameter's values; the shape cannot be changed.
  std::span<double> values(std::size_t index);
  std::span<double> values(std::string_view name) {
    return values(index_of(name));
  }

  /// Replaces a value; the shape must match the existing one.
  void assign(std::string_view name, const Tensor& value);

  void set_trainable(std::string_view name, bool trainable);

  const std::vector<Parameter>& entries() const { return entries_; }
  std::size_t scalar_count(bool trainable_only = false) const;

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::vector<Parameter> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One gradient tensor per ParamStore entry, index-aligned with the store.
/// Frozen parameters keep zero gradients.
class GradientSet {
 public:
  GradientSet() = default;
  explicit GradientSet(const ParamStore& store);

  Tensor& operator[](std::size_t index) { return grads_.at(index); }
  const Tensor& operator[](std::size_t index) const { return grads_.at(index); }
  std::size_t size() const { return grads_.size(); }

  void accumulate(const GradientSet& other, double scale = 1.0);
  void scale(double factor);

 private:
  std::vector<Tensor> grads_;
};

}  // namespace wavegnn
