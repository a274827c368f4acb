#include "wavegnn/training.hpp"

#include "wavegnn/errors.hpp"

namespace wavegnn {

Var sample_loss(Var logits, const IrregularSample& sample, TaskMode mode,
                const std::vector<double>& class_weights) {
  const std::size_t classes = logits.value().numel();
  if (mode == TaskMode::kMultilabel) {
    if (sample.label_vector.size() != classes) {
      throw DimensionError("label vector has " + std::to_string(sample.label_vector.size()) +
                           " entries for " + std::to_string(classes) + " logits");
    }
    return ops::binary_cross_entropy(logits, Tensor::vector(sample.label_vector));
  }
  double weight = 1.0;
  if (!class_weights.empty()) {
    if (class_weights.size() != classes) {
      throw DimensionError("class_weights has " + std::to_string(class_weights.size()) +
                           " entries for " + std::to_string(classes) + " classes");
    }
    if (sample.label >= classes) throw ContractError("label out of range");
    weight = class_weights[sample.label];
  }
  return ops::cross_entropy(logits, sample.label, weight);
}

}  // namespace wavegnn
