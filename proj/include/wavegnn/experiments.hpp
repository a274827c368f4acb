#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wavegnn/dataset.hpp"
#include "wavegnn/metrics.hpp"
#include "wavegnn/model.hpp"
#include "wavegnn/training.hpp"

namespace wavegnn {

/// Fresh, seeded model for one experiment run.
using ModelFactory = std::function<Model(std::uint64_t seed)>;

/// Split, seeds and training settings shared by every cell of a grid.
/// Run r uses seed `base_seed + r` for initialization, shuffling and
/// random sensor selection; the split is fixed by `split_seed`.
struct ExperimentConfig {
  SplitRatios ratios;
  std::uint64_t split_seed = 0;
  std::uint64_t base_seed = 0;
  std::size_t n_runs = 3;
  TrainConfig train;
  /// Grid cells run concurrently on up to this many threads.
  std::size_t threads = 1;
};

struct AblationCell {
  AblationVariant variant = AblationVariant::kFull;
  std::uint64_t seed = 0;
  MetricsReport report;
};

/// Retrains from scratch for each variant x run and reports test metrics.
std::vector<AblationCell> run_ablation(const ModelFactory& factory, const Dataset& dataset,
                                       const std::vector<AblationVariant>& variants,
                                       const ExperimentConfig& config);

struct LeaveOutCell {
  DropMode mode = DropMode::kRandom;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  MetricsReport report;
};

/// For each run, trains once on the full training split; every (mode,
/// ratio) cell early-stops on its own sensor-dropped validation split and
/// is scored on the equally dropped test split. Cells are ordered by mode,
/// then ratio, then run.
std::vector<LeaveOutCell> run_leave_sensors_experiment(const ModelFactory& factory,
                                                       const Dataset& dataset,
                                                       const std::vector<double>& ratios,
                                                       const std::vector<DropMode>& modes,
                                                       const ExperimentConfig& config,
                                                       AblationVariant variant =
                                                           AblationVariant::kFull);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(const std::vector<double>& values);

/// Long-format grid: mode,ratio,seed,metric,value.
std::string leaveout_csv(const std::vector<LeaveOutCell>& cells);
/// Per (mode, ratio) mean and std of every scalar metric.
std::string leaveout_summary_csv(const std::vector<LeaveOutCell>& cells);
/// Long-format runs: variant,seed,metric,value.
std::string ablation_csv(const std::vector<AblationCell>& cells);
/// One row per variant: accuracy, precision, recall, f1 as mean and std.
std::string ablation_summary_csv(const std::vector<AblationCell>& cells);

/// Scalar metrics in a fixed order, as written to the CSV outputs.
std::vector<std::pair<std::string, double>> scalar_metrics(const MetricsReport& report);

}  // namespace wavegnn
