#include "wavegnn/encoder.hpp"

#include <cmath>
#include <string>

#include "wavegnn/errors.hpp"

namespace wavegnn::encoder {

using namespace ops;

namespace {

Var linear(Tape& tape, const ParamStore& params, Var x, const std::string& prefix) {
  return add(matmul(x, tape.parameter(params, prefix + ".w")),
             tape.parameter(params, prefix + ".b"));
}

}  // namespace

Var init_node_states(Tape& tape, const ParamStore& params, const ModelConfig& config,
                     const std::optional<std::vector<double>>& static_features) {
  if (!static_features) return tape.parameter(params, "init.fallback");
  if (static_features->size() != config.static_dim || config.static_dim == 0) {
    throw DimensionError("static features have " + std::to_string(static_features->size()) +
                         " entries, model expects " + std::to_string(config.static_dim));
  }
  Var p = tape.constant(Tensor(Shape{1, config.static_dim}, *static_features));
  Var hidden = relu(linear(tape, params, p, "init.l1"));
  Var flat = linear(tape, params, hidden, "init.l2");
  return reshape(flat, Shape{config.n_sensors, config.embed_dim});
}

Var embed_observations(Tape& tape, const ParamStore& params, Var values) {
  Var hidden = tanh(linear(tape, params, values, "obs.l1"));
  return tanh(linear(tape, params, hidden, "obs.l2"));
}

std::vector<double> compute_deltas(std::span<const double> timestamps,
                                   std::span<const double> mask) {
  std::vector<double> out(timestamps.size(), 0.0);
  bool seen = false;
  double previous = 0.0;
  for (std::size_t j = 0; j < timestamps.size(); ++j) {
    if (mask[j] == 0.0) continue;
    out[j] = seen ? timestamps[j] - previous : 0.0;
    previous = timestamps[j];
    seen = true;
  }
  return out;
}

std::vector<double> deltas_from_last(std::span<const double> timestamps,
                                     std::span<const double> mask) {
  std::vector<double> out(timestamps.size(), 0.0);
  std::size_t last = timestamps.size();
  for (std::size_t j = timestamps.size(); j-- > 0;) {
    if (mask[j] != 0.0) {
      last = j;
      break;
    }
  }
  if (last == timestamps.size()) return out;
  for (std::size_t j = 0; j <= last; ++j) {
    if (mask[j] != 0.0) out[j] = timestamps[last] - timestamps[j];
  }
  return out;
}

Var time2vec(Tape& tape, const ParamStore& params, Var deltas) {
  Var omega = tape.parameter(params, "t2v.omega");
  Var phi = tape.parameter(params, "t2v.phi");
  Var omega_row = reshape(omega, Shape{1, omega.value().numel()});
  return time2vec_activation(add(matmul(deltas, omega_row), phi));
}

Var project_time_encoding(Tape& tape, const ParamStore& params, Var features) {
  return matmul(features, tape.parameter(params, "t2v.proj"));
}

Tensor positional_encoding(std::size_t steps, std::size_t width) {
  Tensor pe(Shape{steps, width});
  for (std::size_t pos = 0; pos < steps; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Var encode_sequence(Tape& tape, const ParamStore& params, const ModelConfig& config,
                    Var inputs, const Tensor& mask) {
  const Shape shape = inputs.shape();
  if (shape.size() != 3 || shape[2] != config.embed_dim) {
    throw DimensionError("encode_sequence expects [S x T x M] input, got " +
                         shape_to_string(shape));
  }
  const std::size_t seqs = shape[0], steps = shape[1], width = shape[2];
  if (mask.numel() != seqs * steps) {
    throw DimensionError("encode_sequence mask " + shape_to_string(mask.shape()) +
                         " does not match input " + shape_to_string(shape));
  }
  const std::size_t heads = config.enc_heads;
  const std::size_t head_dim = width / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Tensor key_mask = mask.reshaped(Shape{seqs, 1, steps});

  Var x = reshape(inputs, Shape{seqs * steps, width});
  for (std::size_t layer = 0; layer < config.enc_layers; ++layer) {
    const std::string pre = "enc" + std::to_string(layer);
    std::vector<Var> head_out;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::string hp = pre + ".h" + std::to_string(h);
      const Shape split{seqs, steps, head_dim};
      Var q = reshape(linear(tape, params, x, hp + ".q"), split);
      Var k = reshape(linear(tape, params, x, hp + ".k"), split);
      Var v = reshape(linear(tape, params, x, hp + ".v"), split);
      Var attn = masked_softmax(scale(matmul_nt(q, k), inv_scale), key_mask);
      head_out.push_back(reshape(matmul(attn, v), Shape{seqs * steps, head_dim}));
    }
    Var attended = linear(tape, params, concat(head_out), pre + ".o");
    Var x1 = layer_norm(add(x, attended), tape.parameter(params, pre + ".ln1.g"),
                        tape.parameter(params, pre + ".ln1.b"));
    Var ff = linear(tape, params, relu(linear(tape, params, x1, pre + ".ff1")), pre + ".ff2");
    x = layer_norm(add(x1, ff), tape.parameter(params, pre + ".ln2.g"),
                   tape.parameter(params, pre + ".ln2.b"));
  }
  Var out = reshape(x, shape);
  return mul(out, tape.constant(mask.reshaped(Shape{seqs, steps, 1})));
}

Var decay_rate(Tape& tape, const ParamStore& params) {
  return softplus(tape.parameter(params, "decay.eta_raw"));
}

Var decay_weights(Var eta, const Tensor& deltas_from_last, const Tensor& mask) {
  Tape& tape = eta.tape();
  Var logits = mul(tape.constant(deltas_from_last), scale(eta, -1.0));
  return masked_softmax(logits, mask);
}

Var aggregate_sequence(Var sequence, Var weights) {
  const Shape s = sequence.shape();
  if (s.size() != 3 || weights.value().numel() != s[0] * s[1]) {
    throw DimensionError("aggregate_sequence: sequence " + shape_to_string(s) +
                         " vs weights " + shape_to_string(weights.shape()));
  }
  Var w = reshape(weights, Shape{s[0], 1, s[1]});
  return reshape(matmul(w, sequence), Shape{s[0], s[2]});
}

Var update_node_states(Var states, Var deltas) {
  if (states.shape() != deltas.shape()) {
    throw DimensionError("update_node_states: " + shape_to_string(states.shape()) +
                         " vs " + shape_to_string(deltas.shape()));
  }
  return add(states, deltas);
}

}  // namespace wavegnn::encoder
