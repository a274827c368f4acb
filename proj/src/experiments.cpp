#include "wavegnn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "parallel.hpp"
#include "wavegnn/errors.hpp"

namespace wavegnn {

namespace {

TrainConfig run_train_config(const ExperimentConfig& config, std::uint64_t seed) {
  TrainConfig tc = config.train;
  tc.seed = seed;
  return tc;
}

}  // namespace

std::vector<AblationCell> run_ablation(const ModelFactory& factory, const Dataset& dataset,
                                       const std::vector<AblationVariant>& variants,
                                       const ExperimentConfig& config) {
  if (config.n_runs == 0) throw ContractError("ablation needs at least one run");
  const DatasetSplit split = stratified_split(dataset, config.ratios, config.split_seed);
  std::vector<AblationCell> cells;
  for (AblationVariant variant : variants) {
    for (std::size_t r = 0; r < config.n_runs; ++r) {
      AblationCell cell;
      cell.variant = variant;
      cell.seed = config.base_seed + r;
      cells.push_back(std::move(cell));
    }
  }
  detail::parallel_for(cells.size(), config.threads, [&](std::size_t i) {
    AblationCell& cell = cells[i];
    const TrainResult trained =
        train(factory(cell.seed), split.train, split.val, run_train_config(config, cell.seed),
              cell.variant);
    cell.report = evaluate(trained.model, split.test, cell.variant);
    cell.report.metadata.seed = cell.seed;
    cell.report.metadata.variant = to_string(cell.variant);
    cell.report.metadata.epochs = trained.history.size();
  });
  return cells;
}

std::vector<LeaveOutCell> run_leave_sensors_experiment(const ModelFactory& factory,
                                                       const Dataset& dataset,
                                                       const std::vector<double>& ratios,
                                                       const std::vector<DropMode>& modes,
                                                       const ExperimentConfig& config,
                                                       AblationVariant variant) {
  if (config.n_runs == 0) throw ContractError("leave-sensors-out needs at least one run");
  const DatasetSplit split = stratified_split(dataset, config.ratios, config.split_seed);
  if (split.val.samples.empty()) {
    throw ContractError("leave-sensors-out needs a non-empty validation split");
  }
  // Fail on bad ratios or a missing ranking before any training starts.
  for (DropMode mode : modes) {
    for (double ratio : ratios) {
      SensorDropSpec spec{mode, ratio, dataset.informative_ranking, config.base_seed};
      select_dropped_sensors(spec, dataset.n_sensors);
    }
  }

  const std::size_t per_run = modes.size() * ratios.size();
  std::vector<LeaveOutCell> cells(per_run * config.n_runs);
  detail::parallel_for(config.n_runs, config.threads, [&](std::size_t r) {
    const std::uint64_t seed = config.base_seed + r;
    std::vector<SensorDropSpec> specs;
    std::vector<Dataset> vals, tests;
    specs.reserve(per_run);
    vals.reserve(per_run);
    tests.reserve(per_run);
    for (DropMode mode : modes) {
      for (double ratio : ratios) {
        SensorDropSpec spec{mode, ratio, dataset.informative_ranking, seed};
        vals.push_back(leave_sensors_out(split.val, spec));
        tests.push_back(leave_sensors_out(split.test, spec));
        specs.push_back(std::move(spec));
      }
    }
    std::vector<const Dataset*> monitors;
    for (const Dataset& v : vals) monitors.push_back(&v);
    const TrainResult trained = train_multi(factory(seed), split.train, monitors,
                                            run_train_config(config, seed), variant);
    for (std::size_t k = 0; k < per_run; ++k) {
      Model model = trained.model;
      model.params = trained.monitors[k].best_params;
      LeaveOutCell cell;
      cell.mode = specs[k].mode;
      cell.ratio = specs[k].ratio;
      cell.seed = seed;
      cell.report = evaluate(model, tests[k], variant);
      RunMetadata& meta = cell.report.metadata;
      meta.seed = seed;
      meta.variant = to_string(variant);
      meta.drop_mode = to_string(specs[k].mode);
      meta.drop_ratio = specs[k].ratio;
      meta.dropped_sensors = select_dropped_sensors(specs[k], dataset.n_sensors);
      meta.epochs = trained.monitors[k].epochs_run;
      // Cells ordered mode-major, then ratio, then run.
      cells[k * config.n_runs + r] = std::move(cell);
    }
  });
  return cells;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  if (values.empty()) return out;
  double total = 0.0;
  for (double v : values) total += v;
  out.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::vector<std::pair<std::string, double>> scalar_metrics(const MetricsReport& report) {
  std::vector<std::pair<std::string, double>> out = {
      {"accuracy", report.accuracy},
      {"weighted_precision", report.weighted_precision},
      {"weighted_recall", report.weighted_recall},
      {"weighted_f1", report.weighted_f1},
      {"macro_f1", report.macro_f1},
  };
  if (report.auroc) out.emplace_back("auroc", *report.auroc);
  if (report.auprc) out.emplace_back("auprc", *report.auprc);
  return out;
}

std::string leaveout_csv(const std::vector<LeaveOutCell>& cells) {
  std::ostringstream out;
  out << "mode,ratio,seed,metric,value\n";
  for (const LeaveOutCell& cell : cells) {
    for (const auto& [name, value] : scalar_metrics(cell.report)) {
      out << to_string(cell.mode) << ',' << format_double(cell.ratio) << ',' << cell.seed << ','
          << name << ',' << format_double(value) << '\n';
    }
  }
  return out.str();
}

std::string leaveout_summary_csv(const std::vector<LeaveOutCell>& cells) {
  // Keyed by first appearance so rows follow the grid order.
  std::vector<std::pair<DropMode, double>> keys;
  std::map<std::pair<int, double>, std::map<std::string, std::vector<double>>> values;
  std::vector<std::string> metric_order;
  for (const LeaveOutCell& cell : cells) {
    const std::pair<int, double> key{static_cast<int>(cell.mode), cell.ratio};
    if (!values.contains(key)) keys.emplace_back(cell.mode, cell.ratio);
    for (const auto& [name, value] : scalar_metrics(cell.report)) {
      values[key][name].push_back(value);
      if (std::find(metric_order.begin(), metric_order.end(), name) == metric_order.end()) {
        metric_order.push_back(name);
      }
    }
  }
  std::ostringstream out;
  out << "mode,ratio,metric,mean,std,runs\n";
  for (const auto& [mode, ratio] : keys) {
    const auto& by_metric = values[{static_cast<int>(mode), ratio}];
    for (const std::string& name : metric_order) {
      auto it = by_metric.find(name);
      if (it == by_metric.end()) continue;
      const MeanStd ms = mean_std(it->second);
      out << to_string(mode) << ',' << format_double(ratio) << ',' << name << ','
          << format_double(ms.mean) << ',' << format_double(ms.std) << ','
          << it->second.size() << '\n';
    }
  }
  return out.str();
}

std::string ablation_csv(const std::vector<AblationCell>& cells) {
  std::ostringstream out;
  out << "variant,seed,metric,value\n";
  for (const AblationCell& cell : cells) {
    for (const auto& [name, value] : scalar_metrics(cell.report)) {
      out << to_string(cell.variant) << ',' << cell.seed << ',' << name << ','
          << format_double(value) << '\n';
    }
  }
  return out.str();
}

std::string ablation_summary_csv(const std::vector<AblationCell>& cells) {
  std::vector<AblationVariant> order;
  std::map<AblationVariant, std::vector<const MetricsReport*>> reports;
  for (const AblationCell& cell : cells) {
    if (!reports.contains(cell.variant)) order.push_back(cell.variant);
    reports[cell.variant].push_back(&cell.report);
  }
  std::ostringstream out;
  out << "variant,accuracy_mean,accuracy_std,precision_mean,precision_std,recall_mean,"
         "recall_std,f1_mean,f1_std,runs\n";
  for (AblationVariant variant : order) {
    const auto& rs = reports[variant];
    std::vector<double> acc, prec, rec, f1;
    for (const MetricsReport* r : rs) {
      acc.push_back(r->accuracy);
      prec.push_back(r->weighted_precision);
      rec.push_back(r->weighted_recall);
      f1.push_back(r->weighted_f1);
    }
    out << to_string(variant);
    for (const auto* column : {&acc, &prec, &rec, &f1}) {
      const MeanStd ms = mean_std(*column);
      out << ',' << format_double(ms.mean) << ',' << format_double(ms.std);
    }
    out << ',' << rs.size() << '\n';
  }
  return out.str();
}

}  // namespace wavegnn
