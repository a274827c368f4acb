#pragma once

// Intra-series pipeline. Sequence ops are batched over sensors: a leading
// axis of size S holds one sequence per sensor.

#include <optional>
#include <span>
#include <vector>

#include "wavegnn/autodiff.hpp"
#include "wavegnn/model.hpp"

namespace wavegnn::encoder {

/// Node states [n x M]: two-layer ReLU MLP of the static features, or the
/// shared trainable fallback matrix when the sample has none.
Var init_node_states(Tape& tape, const ParamStore& params, const ModelConfig& config,
                     const std::optional<std::vector<double>>& static_features);

/// tanh(W2 tanh(W1 s + b1) + b2) per row; `values` is [R x 1], result [R x M].
Var embed_observations(Tape& tape, const ParamStore& params, Var values);

/// Time since the sensor's previous observation at observed positions,
/// 0 at the first observation and at masked positions.
std::vector<double> compute_deltas(std::span<const double> timestamps,
                                   std::span<const double> mask);

/// Time between each observed position and the sensor's last observation;
/// masked positions get 0.
std::vector<double> deltas_from_last(std::span<const double> timestamps,
                                     std::span<const double> mask);

/// Raw Time2Vec features [R x d_t] of `deltas` ([R x 1]): column 0 is
/// omega_0 * d + phi_0, the others sin(omega_k * d + phi_k).
Var time2vec(Tape& tape, const ParamStore& params, Var deltas);

/// Linear map of Time2Vec features to the embedding width M.
Var project_time_encoding(Tape& tape, const ParamStore& params, Var features);

/// Sinusoidal position-index encoding [T x M] used when temporal encoding is
/// ablated.
Tensor positional_encoding(std::size_t steps, std::size_t width);

/// Post-norm transformer stack over `inputs` [S x T x M] with key padding
/// mask [S x T]. Rows at masked positions are zeroed in the output, so a
/// sequence without observations maps to zeros.
Var encode_sequence(Tape& tape, const ParamStore& params, const ModelConfig& config,
                    Var inputs, const Tensor& mask);

/// eta = softplus(eta_raw), shape [1].
Var decay_rate(Tape& tape, const ParamStore& params);

/// m_j exp(-eta d_j) / sum_k m_k exp(-eta d_k) per row of [S x T]; rows
/// without observations are all zero.
Var decay_weights(Var eta, const Tensor& deltas_from_last, const Tensor& mask);

/// Weighted sum over time: [S x T x M] with weights [S x T] -> [S x M].
Var aggregate_sequence(Var sequence, Var weights);

/// Residual update z_v <- z_v + dz_v.
Var update_node_states(Var states, Var deltas);

}  // namespace wavegnn::encoder
