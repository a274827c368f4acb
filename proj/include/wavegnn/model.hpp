#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "wavegnn/autodiff.hpp"
#include "wavegnn/dataset.hpp"
#include "wavegnn/params.hpp"

namespace wavegnn {

enum class AblationVariant {
  kFull,
  kNoShortTerm,
  kNoLongTerm,
  kNoInterSeries,
  kNoIntraSeries,
  kNoTemporalEncoding,
  kNoDecayRate,
};

inline constexpr std::array<AblationVariant, 7> kAllVariants = {
    AblationVariant::kFull,           AblationVariant::kNoShortTerm,
    AblationVariant::kNoLongTerm,     AblationVariant::kNoInterSeries,
    AblationVariant::kNoIntraSeries,  AblationVariant::kNoTemporalEncoding,
    AblationVariant::kNoDecayRate,
};

std::string to_string(AblationVariant variant);
AblationVariant parse_variant(const std::string& text);

/// Architecture hyperparameters. Zero-valued `ff_dim` / `readout_dim` mean
/// "derive from embed_dim" (2M and M respectively).
struct ModelConfig {
  std::size_t n_sensors = 0;
  std::size_t n_classes = 0;
  std::size_t static_dim = 0;
  TaskMode task_mode = TaskMode::kMulticlass;
  std::size_t embed_dim = 16;
  std::size_t time_dim = 8;
  std::size_t enc_heads = 2;
  std::size_t enc_layers = 1;
  std::size_t ff_dim = 0;
  std::size_t adj_heads = 2;
  std::size_t gcn_layers = 2;
  std::size_t readout_dim = 0;
  double sparsity_k = 50.0;
  double init_eta = 0.1;

  std::size_t feed_forward_dim() const { return ff_dim ? ff_dim : 2 * embed_dim; }
  std::size_t graph_dim() const { return readout_dim ? readout_dim : embed_dim; }

  /// Fills schema-derived fields (n, C, d_p, task mode) from a dataset.
  void adopt_schema(const Dataset& dataset);
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& config);
void from_json(const nlohmann::json& j, ModelConfig& config);

struct Model {
  ModelConfig config;
  ParamStore params;
};

/// Creates every parameter with seeded initial values.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Intermediate values of one forward pass; stages skipped by the ablation
/// variant stay empty.
struct ForwardTrace {
  std::optional<Var> initial_states;    // [n x M]
  std::optional<Var> sequence_outputs;  // [n x T x M]
  std::optional<Var> decay;             // [n x T]
  std::optional<Var> node_states;       // [n x M]
  std::optional<Var> short_term;        // [n x n]
  std::optional<Var> long_term;         // [n x n]
  std::optional<Var> adjacency;         // blended, pre-sparsification
  std::optional<Var> sparse_adjacency;
  std::optional<Var> gcn_output;        // [n x M]
  std::optional<Var> graph_embedding;   // [l]
  std::optional<Var> logits;            // [C]
};

/// Per-sample constants derived from the grid: transposed zero-filled values,
/// masks and the two time-difference tables, all [n x T].
struct SequenceInputs {
  Tensor values;
  Tensor mask;
  Tensor deltas;
  Tensor deltas_from_last;
};

SequenceInputs prepare_inputs(const IrregularSample& sample);

/// Records the whole pipeline for one sample on `tape`.
ForwardTrace full_forward(Tape& tape, const Model& model, const IrregularSample& sample,
                          AblationVariant variant = AblationVariant::kFull);

/// Logits as a plain tensor (builds and discards a tape).
Tensor predict_logits(const Model& model, const IrregularSample& sample,
                      AblationVariant variant = AblationVariant::kFull);

struct Checkpoint {
  Model model;
  /// Run configuration echoed at save time; always holds a "model" object.
  nlohmann::json config;
};

/// JSON document {"config": {..., "model": {...}}, "params": {name: {shape,
/// data}}} with 17-significant-digit floats. `run_config` (may be null) is
/// echoed with its "model" entry replaced by the model's own config.
std::string checkpoint_text(const Model& model, const nlohmann::json& run_config = nullptr);
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& run_config = nullptr);
/// Rebuilds the model from its config and checks every parameter's shape.
Checkpoint parse_checkpoint(const std::string& text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wavegnn
