#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wavegnn/tensor.hpp"

namespace wavegnn {

enum class TaskMode { kMulticlass, kMultilabel };

std::string to_string(TaskMode mode);
TaskMode parse_task_mode(const std::string& text);

/// One multivariate series on a shared, strictly increasing time grid.
/// `values` and `mask` are [T x n]; masked cells hold exactly 0.
struct IrregularSample {
  std::string id;
  std::vector<double> timestamps;
  Tensor values;
  Tensor mask;
  std::optional<std::vector<double>> static_features;
  std::size_t label = 0;            // multiclass
  std::vector<double> label_vector;  // multilabel: C entries in {0, 1}

  std::size_t steps() const { return timestamps.size(); }
  std::size_t sensors() const { return values.rank() == 2 ? values.dim(1) : 0; }
  bool observed(std::size_t t, std::size_t v) const { return mask.at(t, v) != 0.0; }
};

struct Dataset {
  std::vector<IrregularSample> samples;
  std::size_t n_sensors = 0;
  std::size_t n_classes = 0;
  std::size_t static_dim = 0;
  TaskMode task_mode = TaskMode::kMulticlass;
  /// Sensors ordered from most to least informative; empty when unknown.
  std::vector<std::size_t> informative_ranking;

  std::size_t size() const { return samples.size(); }
};

/// Throws SchemaError/ValidationError when any dataset invariant fails.
void validate(const Dataset& dataset);

/// Zeroes `values` wherever `mask` is 0.
void zero_fill(IrregularSample& sample);

Dataset read_jsonl(std::istream& in);
void write_jsonl(const Dataset& dataset, std::ostream& out);
Dataset load_jsonl(const std::filesystem::path& path);
void save_jsonl(const Dataset& dataset, const std::filesystem::path& path);

/// Fraction of unobserved (t, v) cells over the whole dataset.
double missing_ratio(const Dataset& dataset);

enum class SignalMode { kIntra, kCross, kBoth };

std::string to_string(SignalMode mode);
SignalMode parse_signal_mode(const std::string& text);

struct SyntheticConfig {
  std::size_t n_samples = 200;
  std::size_t n_sensors = 4;
  std::size_t steps = 16;
  std::size_t n_classes = 2;
  double missing_ratio = 0.5;
  SignalMode signal_mode = SignalMode::kIntra;
  double jitter = 0.2;
  double noise = 0.1;
  /// Follower lag, in time units, of each coupled pair.
  double coupling_lag = 1.0;
  /// Pair p couples with weight w = (1 - coupling_falloff)^p; the follower's
  /// own oscillator, scaled by sqrt(1 - w^2), fills the rest. 0 couples every
  /// pair fully.
  double coupling_falloff = 0.0;
  /// Coupled pairs in cross/both modes; 0 means floor(n_sensors / 2). Sensors
  /// outside the pairs carry no class signal in cross mode.
  std::size_t n_pairs = 0;
  std::uint64_t seed = 0;
};

void validate(const SyntheticConfig& config);

/// Deterministic given `config.seed`. Labels are balanced (sample i gets
/// class i mod C). In cross mode the class only changes the sign of the
/// lagged coupling between fixed (driver, follower) sensor pairs; each
/// sensor's marginal distribution is class-independent.
Dataset generate_synthetic(const SyntheticConfig& config);

/// Designated (driver, follower) pairs used by cross/both modes:
/// (0, 1), (2, 3), ... up to `n_pairs` (0 = as many as fit).
std::vector<std::pair<std::size_t, std::size_t>> coupled_pairs(std::size_t n_sensors,
                                                               std::size_t n_pairs = 0);

enum class DropMode { kFixed, kRandom };

std::string to_string(DropMode mode);
DropMode parse_drop_mode(const std::string& text);

struct SensorDropSpec {
  DropMode mode = DropMode::kRandom;
  double ratio = 0.0;
  std::vector<std::size_t> informative_ranking;
  std::uint64_t seed = 0;
};

/// Number of sensors dropped: round(ratio * n), which must stay below n.
std::size_t drop_count(const SensorDropSpec& spec, std::size_t n_sensors);

/// Sensor indices selected for removal, ascending.
std::vector<std::size_t> select_dropped_sensors(const SensorDropSpec& spec,
                                                std::size_t n_sensors);

/// Empties the selected sensors' columns (mask and values) in every sample.
Dataset leave_sensors_out(const Dataset& dataset, const SensorDropSpec& spec);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
  std::vector<std::string> warnings;
};

/// Per-class largest-remainder split. Classes with fewer samples than split
/// parts are pooled and split globally (recorded in `warnings`).
DatasetSplit stratified_split(const Dataset& dataset, const SplitRatios& ratios,
                              std::uint64_t seed);

/// Largest-remainder allocation of `count` items over `ratios`; ties in the
/// fractional part go to the earlier part.
std::vector<std::size_t> largest_remainder(std::size_t count,
                                           const std::vector<double>& ratios);

/// Decimal text with 17 significant digits; parses back to the same double.
std::string format_double(double value);

}  // namespace wavegnn
