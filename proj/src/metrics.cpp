#include "wavegnn/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "wavegnn/errors.hpp"

namespace wavegnn {

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("scores and labels differ in length");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw ContractError("binary labels must be 0 or 1");
  }
}

std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

struct RankingPair {
  std::optional<double> auroc;
  std::optional<double> auprc;
};

// Macro average over the columns whose metric is defined.
RankingPair ranking_metrics(const std::vector<std::vector<double>>& columns,
                            const std::vector<std::vector<int>>& targets) {
  double roc_sum = 0.0, pr_sum = 0.0;
  std::size_t roc_n = 0, pr_n = 0;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto positives = std::count(targets[c].begin(), targets[c].end(), 1);
    if (positives > 0) {
      pr_sum += auprc(columns[c], targets[c]);
      ++pr_n;
      if (static_cast<std::size_t>(positives) < targets[c].size()) {
        roc_sum += auroc(columns[c], targets[c]);
        ++roc_n;
      }
    }
  }
  RankingPair out;
  if (roc_n) out.auroc = roc_sum / static_cast<double>(roc_n);
  if (pr_n) out.auprc = pr_sum / static_cast<double>(pr_n);
  return out;
}

void summarize(MetricsReport& report) {
  double total = 0.0;
  double wp = 0.0, wr = 0.0, wf = 0.0, mf = 0.0;
  for (const ClassMetrics& m : report.per_class) {
    const auto s = static_cast<double>(m.support);
    total += s;
    wp += s * m.precision;
    wr += s * m.recall;
    wf += s * m.f1;
    mf += m.f1;
  }
  if (total > 0.0) {
    report.weighted_precision = wp / total;
    report.weighted_recall = wr / total;
    report.weighted_f1 = wf / total;
  }
  if (!report.per_class.empty()) {
    report.macro_f1 = mf / static_cast<double>(report.per_class.size());
  }
}

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  m.support = tp + fn;
  if (tp + fp) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels);
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("AUROC needs both positive and negative labels");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks (1-based) of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) rank_sum += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_binary(scores, labels);
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0) throw UndefinedMetricError("AUPRC needs at least one positive label");
  const auto order = descending_order(scores);
  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += static_cast<std::size_t>(labels[order[j]]);
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

MetricsReport classification_report(const Tensor& scores, const std::vector<std::size_t>& labels,
                                    std::size_t n_classes) {
  if (scores.rank() != 2 || scores.dim(0) != labels.size() || scores.dim(1) != n_classes) {
    throw DimensionError("classification_report: scores " + shape_to_string(scores.shape()) +
                         " do not match " + std::to_string(labels.size()) + " labels x " +
                         std::to_string(n_classes) + " classes");
  }
  if (labels.empty()) throw ContractError("classification_report needs at least one sample");
  const std::size_t n = labels.size();
  MetricsReport report;
  report.n_samples = n;
  report.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= n_classes) throw ContractError("label out of range");
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_classes; ++c) {
      if (scores.at(i, c) > scores.at(i, best)) best = c;
    }
    ++report.confusion[labels[i]][best];
    if (best == labels[i]) ++correct;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = report.confusion[c][c], fp = 0, fn = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      if (k == c) continue;
      fp += report.confusion[k][c];
      fn += report.confusion[c][k];
    }
    report.per_class.push_back(class_metrics(tp, fp, fn));
  }
  summarize(report);

  std::vector<std::vector<double>> columns;
  std::vector<std::vector<int>> targets;
  const std::size_t first = n_classes == 2 ? 1 : 0;
  for (std::size_t c = first; c < n_classes; ++c) {
    std::vector<double> col(n);
    std::vector<int> tgt(n);
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = scores.at(i, c);
      tgt[i] = labels[i] == c ? 1 : 0;
    }
    columns.push_back(std::move(col));
    targets.push_back(std::move(tgt));
  }
  const RankingPair ranking = ranking_metrics(columns, targets);
  report.auroc = ranking.auroc;
  report.auprc = ranking.auprc;
  return report;
}

MetricsReport multilabel_report(const Tensor& probabilities, const Tensor& targets) {
  if (probabilities.rank() != 2 || probabilities.shape() != targets.shape()) {
    throw DimensionError("multilabel_report: " + shape_to_string(probabilities.shape()) +
                         " vs " + shape_to_string(targets.shape()));
  }
  const std::size_t n = probabilities.dim(0), n_classes = probabilities.dim(1);
  if (n == 0) throw ContractError("multilabel_report needs at least one sample");
  MetricsReport report;
  report.n_samples = n;
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool all_right = true;
    for (std::size_t c = 0; c < n_classes; ++c) {
      const bool predicted = probabilities.at(i, c) >= 0.5;
      const bool actual = targets.at(i, c) != 0.0;
      if (predicted && actual) ++tp[c];
      if (predicted && !actual) ++fp[c];
      if (!predicted && actual) ++fn[c];
      all_right = all_right && predicted == actual;
    }
    if (all_right) ++exact;
  }
  report.accuracy = static_cast<double>(exact) / static_cast<double>(n);
  for (std::size_t c = 0; c < n_classes; ++c) {
    report.per_class.push_back(class_metrics(tp[c], fp[c], fn[c]));
  }
  summarize(report);

  std::vector<std::vector<double>> columns(n_classes, std::vector<double>(n));
  std::vector<std::vector<int>> tgts(n_classes, std::vector<int>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < n_classes; ++c) {
      columns[c][i] = probabilities.at(i, c);
      tgts[c][i] = targets.at(i, c) != 0.0 ? 1 : 0;
    }
  }
  const RankingPair ranking = ranking_metrics(columns, tgts);
  report.auroc = ranking.auroc;
  report.auprc = ranking.auprc;
  return report;
}

void to_json(nlohmann::json& j, const RunMetadata& meta) {
  j = nlohmann::json{{"seed", meta.seed},
                     {"variant", meta.variant},
                     {"drop_mode", meta.drop_mode},
                     {"drop_ratio", meta.drop_ratio},
                     {"dropped_sensors", meta.dropped_sensors},
                     {"epochs", meta.epochs}};
}

void from_json(const nlohmann::json& j, RunMetadata& meta) {
  j.at("seed").get_to(meta.seed);
  j.at("variant").get_to(meta.variant);
  j.at("drop_mode").get_to(meta.drop_mode);
  j.at("drop_ratio").get_to(meta.drop_ratio);
  j.at("dropped_sensors").get_to(meta.dropped_sensors);
  j.at("epochs").get_to(meta.epochs);
}

void to_json(nlohmann::json& j, const MetricsReport& report) {
  auto optional = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json classes = nlohmann::json::array();
  for (const ClassMetrics& m : report.per_class) {
    classes.push_back({{"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support}});
  }
  j = nlohmann::json{{"n_samples", report.n_samples},
                     {"accuracy", report.accuracy},
                     {"weighted_precision", report.weighted_precision},
                     {"weighted_recall", report.weighted_recall},
                     {"weighted_f1", report.weighted_f1},
                     {"macro_f1", report.macro_f1},
                     {"auroc", optional(report.auroc)},
                     {"auprc", optional(report.auprc)},
                     {"per_class", classes},
                     {"confusion", report.confusion},
                     {"metadata", report.metadata}};
}

std::string report_text(const MetricsReport& report) {
  return nlohmann::json(report).dump(2) + "\n";
}

}  // namespace wavegnn
