#pragma once

#include "wavegnn/autodiff.hpp"
#include "wavegnn/model.hpp"

namespace wavegnn::graph {

/// Head-averaged attention weights softmax((Z Q_h)(Z K_h)^T / sqrt(M/H)).
Var short_term_adjacency(Tape& tape, const ParamStore& params, const ModelConfig& config,
                         Var node_states);

/// Row-wise softmax of G G^T over the global node embeddings G.
Var long_term_adjacency(Tape& tape, const ParamStore& params);

/// alpha = logistic(alpha_raw), shape [1].
Var blend_weight(Tape& tape, const ParamStore& params);

/// alpha * A_S + (1 - alpha) * A_L.
Var blend_adjacency(Var short_term, Var long_term, Var alpha);

/// 0/1 keep-mask zeroing the floor(K n^2 / 100) smallest entries of `a`
/// (ties: lower row-major index first).
Tensor sparsity_mask(const Tensor& a, double k_percent);

/// Applies sparsity_mask; zeroed entries receive no gradient.
Var sparsify(Var adjacency, double k_percent);

/// V_l = ReLU(A V_{l-1} W_l) + V_{l-1}, starting from the node states.
Var gcn_forward(Tape& tape, const ParamStore& params, const ModelConfig& config,
                Var node_states, Var adjacency);

/// Graph embedding [l]: fuse(concat(max over nodes, MLP(flatten(V)))).
Var readout(Tape& tape, const ParamStore& params, Var node_embeddings);

/// Raw class logits [C] from the graph embedding.
Var predict_logits(Tape& tape, const ParamStore& params, Var graph_embedding);

}  // namespace wavegnn::graph
