#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavegnn/dataset.hpp"
#include "wavegnn/tensor.hpp"

namespace wavegnn {

/// Area under the ROC curve via the Mann-Whitney statistic with midranks.
/// Throws UndefinedMetricError unless both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Average precision over descending-score thresholds; equal scores form
/// one threshold. Throws UndefinedMetricError without positives.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct RunMetadata {
  std::uint64_t seed = 0;
  std::string variant = "full";
  std::string drop_mode = "none";
  double drop_ratio = 0.0;
  std::vector<std::size_t> dropped_sensors;
  std::size_t epochs = 0;
};

struct MetricsReport {
  std::size_t n_samples = 0;
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  /// Empty when undefined on the evaluated labels (e.g. one class only).
  std::optional<double> auroc;
  std::optional<double> auprc;
  std::vector<ClassMetrics> per_class;
  /// Row = true class, column = predicted class; empty for multilabel.
  std::vector<std::vector<std::size_t>> confusion;
  RunMetadata metadata;
};

/// Multiclass report from per-class scores [N x C]; prediction is the
/// argmax with the lowest index winning ties. Binary ranking metrics use
/// class 1's score; with more classes they are one-vs-rest macro averages
/// over classes that have both positives and negatives.
MetricsReport classification_report(const Tensor& scores, const std::vector<std::size_t>& labels,
                                    std::size_t n_classes);

/// Multilabel report from probabilities and 0/1 targets, both [N x C];
/// a label is predicted when its probability is at least 0.5. Accuracy is
/// the exact-match ratio.
MetricsReport multilabel_report(const Tensor& probabilities, const Tensor& targets);

void to_json(nlohmann::json& j, const RunMetadata& meta);
void from_json(const nlohmann::json& j, RunMetadata& meta);
void to_json(nlohmann::json& j, const MetricsReport& report);

/// Pretty JSON with a trailing newline.
std::string report_text(const MetricsReport& report);

}  // namespace wavegnn
