#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavegnn/dataset.hpp"
#include "wavegnn/model.hpp"
#include "wavegnn/training.hpp"

namespace wavegnn {

struct ExperimentSettings {
  std::size_t runs = 3;
  std::vector<double> ratios = {0.1, 0.3, 0.5};
  std::vector<DropMode> modes = {DropMode::kFixed, DropMode::kRandom};
  std::vector<AblationVariant> variants{kAllVariants.begin(), kAllVariants.end()};

  friend bool operator==(const ExperimentSettings&, const ExperimentSettings&) = default;
};

/// Tiny instance used by the `gradcheck` subcommand.
struct GradCheckSettings {
  std::size_t n_sensors = 4;
  std::size_t steps = 8;
  std::size_t n_classes = 3;
  std::size_t embed_dim = 8;
  double epsilon = 1e-6;
  double tol = 1e-4;

  friend bool operator==(const GradCheckSettings&, const GradCheckSettings&) = default;
};

/// Everything one CLI invocation needs. `seed` drives generation,
/// initialization and shuffling; `split_seed` fixes the data split.
struct RunConfig {
  std::uint64_t seed = 0;
  SyntheticConfig data;
  ModelConfig model;
  TrainConfig train;
  SplitRatios split;
  std::uint64_t split_seed = 0;
  AblationVariant variant = AblationVariant::kFull;
  ExperimentSettings experiment;
  GradCheckSettings gradcheck;
  std::string data_path;
  std::string out_path;
  std::string ckpt_path;
  std::size_t threads = 1;

  /// Checks ranges that do not depend on a dataset.
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& config);
/// Unknown keys anywhere are rejected with ValidationError.
void from_json(const nlohmann::json& j, RunConfig& config);

RunConfig load_run_config(const std::string& path);

/// Entry point of the `wavegnn` tool. Returns 0 on success, 1 on usage,
/// validation, schema or I/O errors, and 2 on numerical failures
/// (including a failed gradient check).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wavegnn
