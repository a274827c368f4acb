#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavegnn/autodiff.hpp"
#include "wavegnn/dataset.hpp"
#include "wavegnn/metrics.hpp"
#include "wavegnn/model.hpp"
#include "wavegnn/params.hpp"

namespace wavegnn {

/// Per-sample training loss. Multiclass: cross-entropy on `sample.label`,
/// scaled by `class_weights[label]` when weights are given. Multilabel:
/// mean binary cross-entropy against `sample.label_vector`.
Var sample_loss(Var logits, const IrregularSample& sample, TaskMode mode,
                const std::vector<double>& class_weights = {});

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  /// Zero moments shaped like `params`.
  explicit AdamState(const ParamStore& params);
  AdamState() = default;
};

/// One bias-corrected Adam update of every trainable parameter. Frozen
/// parameters and their moments are left untouched. Throws NumericalError
/// naming the parameter when a gradient is not finite.
void adam_step(ParamStore& params, const GradientSet& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  std::vector<double> class_weights;
  /// Worker threads for per-sample forward/backward inside a batch.
  std::size_t threads = 1;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_eps}; }
  void validate(std::size_t n_classes) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& config);
void from_json(const nlohmann::json& j, TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  /// One entry per validation monitor; empty without validation data.
  std::vector<double> val_loss;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// Early-stopping outcome for one validation set.
struct MonitorResult {
  ParamStore best_params;
  /// Epoch whose parameters were kept (the last one without validation).
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  /// Epochs trained before this monitor stopped.
  std::size_t epochs_run = 0;
};

struct TrainResult {
  Model model;  // parameters of the first monitor's best epoch
  std::vector<EpochRecord> history;
  std::vector<MonitorResult> monitors;
};

/// Mean loss over `dataset` without recording gradients.
double dataset_loss(const Model& model, const Dataset& dataset, AblationVariant variant,
                    const std::vector<double>& class_weights = {});

/// Mini-batch Adam on `train_set`, shuffled each epoch by a generator seeded
/// from `config.seed`. After each epoch the loss on `val_set` is measured;
/// training stops once it has not improved for `patience` epochs and the
/// best-epoch parameters are returned. With an empty `val_set` all epochs
/// run and the final parameters are kept.
TrainResult train(const Model& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, AblationVariant variant = AblationVariant::kFull);

/// Same trajectory as `train`, watched by several validation sets at once.
/// Each monitor keeps the parameters and stopping epoch it would have had in
/// a separate `train` call; training continues until every monitor stopped.
TrainResult train_multi(const Model& model, const Dataset& train_set,
                        const std::vector<const Dataset*>& val_sets, const TrainConfig& config,
                        AblationVariant variant = AblationVariant::kFull);

/// Class probabilities [N x C]: softmax for multiclass, sigmoid for multilabel.
Tensor predict_probabilities(const Model& model, const Dataset& dataset, AblationVariant variant);

/// Metrics of `model` on `dataset` (metadata left default).
MetricsReport evaluate(const Model& model, const Dataset& dataset, AblationVariant variant);

/// History as CSV: epoch,train_loss,val_loss[,val_loss_1,...].
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace wavegnn
