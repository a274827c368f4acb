#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "parallel.hpp"
#include "wavegnn/errors.hpp"
#include "wavegnn/training.hpp"

namespace wavegnn {

namespace {

struct SampleGrad {
  double loss = 0.0;
  GradientSet grads;
};

SampleGrad sample_gradient(const Model& model, const IrregularSample& sample,
                           AblationVariant variant, const std::vector<double>& class_weights) {
  Tape tape;
  ForwardTrace trace = full_forward(tape, model, sample, variant);
  Var loss = sample_loss(*trace.logits, sample, model.config.task_mode, class_weights);
  tape.reverse_sweep(loss);
  return {loss.value().item(), tape.parameter_gradients(model.params)};
}

void check_schema(const Model& model, const Dataset& dataset, const char* what) {
  if (dataset.n_sensors != model.config.n_sensors || dataset.n_classes != model.config.n_classes ||
      dataset.static_dim != model.config.static_dim ||
      dataset.task_mode != model.config.task_mode) {
    throw ContractError(std::string(what) + " schema does not match the model");
  }
}

struct Monitor {
  const Dataset* data = nullptr;
  MonitorResult result;
  std::size_t bad_epochs = 0;
  bool active = true;
};

}  // namespace

void TrainConfig::validate(std::size_t n_classes) const {
  if (epochs == 0) throw ValidationError("train.epochs must be positive");
  if (batch_size == 0) throw ValidationError("train.batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train.learning_rate must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("train.adam_betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("train.adam_eps must be positive");
  if (patience == 0) throw ValidationError("train.patience must be at least 1");
  if (threads == 0) throw ValidationError("train.threads must be at least 1");
  if (!class_weights.empty()) {
    if (class_weights.size() != n_classes) {
      throw ValidationError("train.class_weights needs one entry per class");
    }
    for (double w : class_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw ValidationError("train.class_weights must be finite and non-negative");
      }
    }
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"adam_betas", {c.beta1, c.beta2}},
                     {"adam_eps", c.adam_eps},
                     {"patience", c.patience},
                     {"seed", c.seed},
                     {"class_weights", c.class_weights},
                     {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const char* const kKeys[] = {"epochs",   "batch_size", "learning_rate",
                                      "adam_betas", "adam_eps", "patience",
                                      "seed",     "class_weights", "threads"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ValidationError("unknown train key \"" + key + "\"");
    }
  }
  if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
  if (j.contains("adam_betas")) {
    const auto& b = j.at("adam_betas");
    if (!b.is_array() || b.size() != 2) throw ValidationError("train.adam_betas needs 2 numbers");
    b[0].get_to(c.beta1);
    b[1].get_to(c.beta2);
  }
  if (j.contains("adam_eps")) j.at("adam_eps").get_to(c.adam_eps);
  if (j.contains("patience")) j.at("patience").get_to(c.patience);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("class_weights")) j.at("class_weights").get_to(c.class_weights);
  if (j.contains("threads")) j.at("threads").get_to(c.threads);
}

double dataset_loss(const Model& model, const Dataset& dataset, AblationVariant variant,
                    const std::vector<double>& class_weights) {
  if (dataset.samples.empty()) throw ContractError("dataset_loss on an empty dataset");
  double total = 0.0;
  for (const IrregularSample& sample : dataset.samples) {
    Tape tape;
    ForwardTrace trace = full_forward(tape, model, sample, variant);
    total += sample_loss(*trace.logits, sample, model.config.task_mode, class_weights)
                 .value()
                 .item();
  }
  return total / static_cast<double>(dataset.samples.size());
}

TrainResult train(const Model& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, AblationVariant variant) {
  std::vector<const Dataset*> vals;
  if (!val_set.samples.empty()) vals.push_back(&val_set);
  return train_multi(model, train_set, vals, config, variant);
}

TrainResult train_multi(const Model& model, const Dataset& train_set,
                        const std::vector<const Dataset*>& val_sets, const TrainConfig& config,
                        AblationVariant variant) {
  if (train_set.samples.empty()) throw ContractError("training split is empty");
  config.validate(model.config.n_classes);
  check_schema(model, train_set, "training set");
  std::vector<Monitor> monitors;
  for (const Dataset* val : val_sets) {
    if (val == nullptr || val->samples.empty()) {
      throw ContractError("validation monitor has no samples");
    }
    check_schema(model, *val, "validation set");
    Monitor m;
    m.data = val;
    m.result.best_val_loss = std::numeric_limits<double>::infinity();
    monitors.push_back(std::move(m));
  }

  TrainResult result;
  result.model = model;
  ParamStore& params = result.model.params;
  AdamState state(params);
  const AdamConfig adam = config.adam();
  std::mt19937_64 rng(config.seed);
  const std::size_t n = train_set.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n - start);
      std::vector<SampleGrad> parts(count);
      detail::parallel_for(count, config.threads, [&](std::size_t k) {
        parts[k] = sample_gradient(result.model, train_set.samples[order[start + k]], variant,
                                   config.class_weights);
      });
      GradientSet total(params);
      for (const SampleGrad& part : parts) {
        total.accumulate(part.grads);
        epoch_loss += part.loss;
      }
      total.scale(1.0 / static_cast<double>(count));
      adam_step(params, total, state, adam);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = epoch_loss / static_cast<double>(n);
    for (Monitor& m : monitors) {
      if (!m.active) {
        record.val_loss.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const double loss = dataset_loss(result.model, *m.data, variant, config.class_weights);
      record.val_loss.push_back(loss);
      m.result.epochs_run = epoch;
      if (loss < m.result.best_val_loss) {
        m.result.best_val_loss = loss;
        m.result.best_epoch = epoch;
        m.result.best_params = params;
        m.bad_epochs = 0;
      } else if (++m.bad_epochs >= config.patience) {
        m.active = false;
      }
    }
    result.history.push_back(std::move(record));
    const bool any_active = std::any_of(monitors.begin(), monitors.end(),
                                        [](const Monitor& m) { return m.active; });
    if (!monitors.empty() && !any_active) break;
  }

  for (Monitor& m : monitors) result.monitors.push_back(std::move(m.result));
  if (!result.monitors.empty()) params = result.monitors.front().best_params;
  return result;
}

Tensor predict_probabilities(const Model& model, const Dataset& dataset,
                             AblationVariant variant) {
  check_schema(model, dataset, "evaluation set");
  const std::size_t classes = model.config.n_classes;
  Tensor out(Shape{dataset.samples.size(), classes});
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const Tensor logits = predict_logits(model, dataset.samples[i], variant);
    if (model.config.task_mode == TaskMode::kMultilabel) {
      for (std::size_t c = 0; c < classes; ++c) {
        out.at(i, c) = 1.0 / (1.0 + std::exp(-logits[c]));
      }
      continue;
    }
    double top = logits[0];
    for (std::size_t c = 1; c < classes; ++c) top = std::max(top, logits[c]);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(logits[c] - top);
    for (std::size_t c = 0; c < classes; ++c) out.at(i, c) = std::exp(logits[c] - top) / total;
  }
  return out;
}

MetricsReport evaluate(const Model& model, const Dataset& dataset, AblationVariant variant) {
  const Tensor probs = predict_probabilities(model, dataset, variant);
  if (model.config.task_mode == TaskMode::kMultilabel) {
    Tensor targets(probs.shape());
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
      for (std::size_t c = 0; c < model.config.n_classes; ++c) {
        targets.at(i, c) = dataset.samples[i].label_vector.at(c);
      }
    }
    return multilabel_report(probs, targets);
  }
  std::vector<std::size_t> labels;
  labels.reserve(dataset.samples.size());
  for (const IrregularSample& s : dataset.samples) labels.push_back(s.label);
  return classification_report(probs, labels, model.config.n_classes);
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  const std::size_t monitors = history.empty() ? 0 : history.front().val_loss.size();
  out << "epoch,train_loss";
  for (std::size_t m = 0; m < monitors; ++m) {
    out << ",val_loss";
    if (m > 0) out << '_' << m;
  }
  out << '\n';
  for (const EpochRecord& r : history) {
    out << r.epoch << ',' << format_double(r.train_loss);
    for (double v : r.val_loss) {
      out << ',';
      if (!std::isnan(v)) out << format_double(v);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace wavegnn
