#include "wavegnn/graph_net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "wavegnn/errors.hpp"

namespace wavegnn::graph {

using namespace ops;

Var short_term_adjacency(Tape& tape, const ParamStore& params, const ModelConfig& config,
                         Var node_states) {
  const std::size_t heads = config.adj_heads;
  const double inv_scale =
      1.0 / std::sqrt(static_cast<double>(config.embed_dim / heads));
  std::optional<Var> total;
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string hp = "adj.h" + std::to_string(h);
    Var q = matmul(node_states, tape.parameter(params, hp + ".q"));
    Var k = matmul(node_states, tape.parameter(params, hp + ".k"));
    Var weights = softmax(scale(matmul_nt(q, k), inv_scale));
    total = total ? add(*total, weights) : weights;
  }
  return scale(*total, 1.0 / static_cast<double>(heads));
}

Var long_term_adjacency(Tape& tape, const ParamStore& params) {
  Var global = tape.parameter(params, "adj.global");
  return softmax(matmul_nt(global, global));
}

Var blend_weight(Tape& tape, const ParamStore& params) {
  return sigmoid(tape.parameter(params, "adj.alpha_raw"));
}

Var blend_adjacency(Var short_term, Var long_term, Var alpha) {
  if (short_term.shape() != long_term.shape()) {
    throw DimensionError("blend_adjacency: " + shape_to_string(short_term.shape()) +
                         " vs " + shape_to_string(long_term.shape()));
  }
  Var one = alpha.tape().constant(Tensor::scalar(1.0));
  return add(mul(alpha, short_term), mul(sub(one, alpha), long_term));
}

Tensor sparsity_mask(const Tensor& a, double k_percent) {
  if (!(k_percent >= 0.0 && k_percent < 100.0)) {
    throw ContractError("sparsity K must lie in [0, 100)");
  }
  const std::size_t total = a.numel();
  const auto zeroed =
      static_cast<std::size_t>(std::floor(k_percent * static_cast<double>(total) / 100.0));
  Tensor keep(a.shape(), 1.0);
  if (zeroed == 0) return keep;
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  for (std::size_t r = 0; r < zeroed; ++r) keep[order[r]] = 0.0;
  return keep;
}

Var sparsify(Var adjacency, double k_percent) {
  Tensor keep = sparsity_mask(adjacency.value(), k_percent);
  return mul(adjacency, adjacency.tape().constant(std::move(keep)));
}

Var gcn_forward(Tape& tape, const ParamStore& params, const ModelConfig& config,
                Var node_states, Var adjacency) {
  Var v = node_states;
  for (std::size_t layer = 0; layer < config.gcn_layers; ++layer) {
    Var w = tape.parameter(params, "gcn" + std::to_string(layer) + ".w");
    v = add(relu(matmul(matmul(adjacency, v), w)), v);
  }
  return v;
}

Var readout(Tape& tape, const ParamStore& params, Var node_embeddings) {
  const Shape s = node_embeddings.shape();
  Var pooled = reshape(max_rows(node_embeddings), Shape{1, s[1]});
  Var flat = reshape(node_embeddings, Shape{1, s[0] * s[1]});
  Var mixed = relu(add(matmul(flat, tape.parameter(params, "readout.concat.w")),
                       tape.parameter(params, "readout.concat.b")));
  const Var parts[] = {pooled, mixed};
  Var fused = relu(add(matmul(concat(parts), tape.parameter(params, "readout.fuse.w")),
                       tape.parameter(params, "readout.fuse.b")));
  return reshape(fused, Shape{fused.value().numel()});
}

Var predict_logits(Tape& tape, const ParamStore& params, Var graph_embedding) {
  const std::size_t width = graph_embedding.value().numel();
  Var row = reshape(graph_embedding, Shape{1, width});
  Var logits = add(matmul(row, tape.parameter(params, "head.w")),
                   tape.parameter(params, "head.b"));
  return reshape(logits, Shape{logits.value().numel()});
}

}  // namespace wavegnn::graph
