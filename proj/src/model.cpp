#include "wavegnn/model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavegnn/encoder.hpp"
#include "wavegnn/errors.hpp"
#include "wavegnn/graph_net.hpp"

namespace wavegnn {

using nlohmann::json;

std::string to_string(AblationVariant variant) {
  switch (variant) {
    case AblationVariant::kFull: return "full";
    case AblationVariant::kNoShortTerm: return "no_short_term";
    case AblationVariant::kNoLongTerm: return "no_long_term";
    case AblationVariant::kNoInterSeries: return "no_inter_series";
    case AblationVariant::kNoIntraSeries: return "no_intra_series";
    case AblationVariant::kNoTemporalEncoding: return "no_temporal_encoding";
    case AblationVariant::kNoDecayRate: return "no_decay_rate";
  }
  return "full";
}

AblationVariant parse_variant(const std::string& text) {
  for (AblationVariant v : kAllVariants) {
    if (to_string(v) == text) return v;
  }
  throw ValidationError("unknown ablation variant '" + text + "'");
}

void ModelConfig::adopt_schema(const Dataset& dataset) {
  n_sensors = dataset.n_sensors;
  n_classes = dataset.n_classes;
  static_dim = dataset.static_dim;
  task_mode = dataset.task_mode;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError("model config: " + what);
  };
  require(n_sensors >= 1, "n_sensors must be at least 1");
  require(n_classes >= 1, "n_classes must be at least 1");
  require(task_mode == TaskMode::kMultilabel || n_classes >= 2,
          "multiclass models need at least 2 classes");
  require(embed_dim >= 1, "embed_dim must be positive");
  require(time_dim >= 1, "time_dim must be positive");
  require(enc_heads >= 1 && embed_dim % enc_heads == 0,
          "embed_dim must be divisible by enc_heads");
  require(adj_heads >= 1 && embed_dim % adj_heads == 0,
          "embed_dim must be divisible by adj_heads");
  require(enc_layers >= 1, "enc_layers must be at least 1");
  require(sparsity_k >= 0.0 && sparsity_k < 100.0, "sparsity_k must lie in [0, 100)");
  require(init_eta > 0.0, "init_eta must be positive");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"n_sensors", c.n_sensors},     {"n_classes", c.n_classes},
           {"static_dim", c.static_dim},   {"task_mode", to_string(c.task_mode)},
           {"embed_dim", c.embed_dim},     {"time_dim", c.time_dim},
           {"enc_heads", c.enc_heads},     {"enc_layers", c.enc_layers},
           {"ff_dim", c.ff_dim},           {"adj_heads", c.adj_heads},
           {"gcn_layers", c.gcn_layers},   {"readout_dim", c.readout_dim},
           {"sparsity_k", c.sparsity_k},   {"init_eta", c.init_eta}};
}

void from_json(const json& j, ModelConfig& c) {
  static const std::set<std::string> kKeys = {
      "n_sensors", "n_classes",  "static_dim", "task_mode",   "embed_dim",
      "time_dim",  "enc_heads",  "enc_layers", "ff_dim",      "adj_heads",
      "gcn_layers", "readout_dim", "sparsity_k", "init_eta"};
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ValidationError("unknown model config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n_sensors", c.n_sensors);
  get("n_classes", c.n_classes);
  get("static_dim", c.static_dim);
  if (j.contains("task_mode")) c.task_mode = parse_task_mode(j.at("task_mode").get<std::string>());
  get("embed_dim", c.embed_dim);
  get("time_dim", c.time_dim);
  get("enc_heads", c.enc_heads);
  get("enc_layers", c.enc_layers);
  get("ff_dim", c.ff_dim);
  get("adj_heads", c.adj_heads);
  get("gcn_layers", c.gcn_layers);
  get("readout_dim", c.readout_dim);
  get("sparsity_k", c.sparsity_k);
  get("init_eta", c.init_eta);
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor xavier(std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform(Shape{fan_in, fan_out}, -limit, limit);
  }

  Tensor uniform(Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = dist(rng_);
    return t;
  }

  Tensor normal(Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = dist(rng_);
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

void add_linear(ParamStore& store, Initializer& init, const std::string& prefix,
                std::size_t in, std::size_t out) {
  store.add(prefix + ".w", init.xavier(in, out));
  store.add(prefix + ".b", Tensor(Shape{out}));
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model{config, {}};
  ParamStore& p = model.params;
  Initializer init(seed);
  const std::size_t n = config.n_sensors, m = config.embed_dim;
  const std::size_t l = config.graph_dim(), dt = config.time_dim;

  p.add("init.fallback", init.normal(Shape{n, m}, 0.1));
  if (config.static_dim > 0) {
    add_linear(p, init, "init.l1", config.static_dim, m);
    add_linear(p, init, "init.l2", m, n * m);
  }
  add_linear(p, init, "obs.l1", 1, m);
  add_linear(p, init, "obs.l2", m, m);
  p.add("t2v.omega", init.uniform(Shape{dt}, -1.0, 1.0));
  p.add("t2v.phi", init.uniform(Shape{dt}, -std::numbers::pi, std::numbers::pi));
  p.add("t2v.proj", init.xavier(dt, m));

  const std::size_t head_dim = m / config.enc_heads;
  const std::size_t ff = config.feed_forward_dim();
  for (std::size_t layer = 0; layer < config.enc_layers; ++layer) {
    const std::string pre = "enc" + std::to_string(layer);
    for (std::size_t h = 0; h < config.enc_heads; ++h) {
      const std::string hp = pre + ".h" + std::to_string(h);
      add_linear(p, init, hp + ".q", m, head_dim);
      add_linear(p, init, hp + ".k", m, head_dim);
      add_linear(p, init, hp + ".v", m, head_dim);
    }
    add_linear(p, init, pre + ".o", m, m);
    p.add(pre + ".ln1.g", Tensor(Shape{m}, 1.0));
    p.add(pre + ".ln1.b", Tensor(Shape{m}));
    add_linear(p, init, pre + ".ff1", m, ff);
    add_linear(p, init, pre + ".ff2", ff, m);
    p.add(pre + ".ln2.g", Tensor(Shape{m}, 1.0));
    p.add(pre + ".ln2.b", Tensor(Shape{m}));
  }
  // softplus^-1 so that eta starts at init_eta.
  p.add("decay.eta_raw", Tensor::scalar(std::log(std::expm1(config.init_eta))));

  const std::size_t adj_dim = m / config.adj_heads;
  for (std::size_t h = 0; h < config.adj_heads; ++h) {
    const std::string hp = "adj.h" + std::to_string(h);
    p.add(hp + ".q", init.xavier(m, adj_dim));
    p.add(hp + ".k", init.xavier(m, adj_dim));
  }
  p.add("adj.global", init.normal(Shape{n, m}, 1.0 / std::sqrt(static_cast<double>(m))));
  p.add("adj.alpha_raw", Tensor::scalar(0.0));
  for (std::size_t layer = 0; layer < config.gcn_layers; ++layer) {
    p.add("gcn" + std::to_string(layer) + ".w", init.xavier(m, m));
  }
  add_linear(p, init, "readout.concat", n * m, l);
  add_linear(p, init, "readout.fuse", m + l, l);
  add_linear(p, init, "head", l, config.n_classes);
  return model;
}

SequenceInputs prepare_inputs(const IrregularSample& sample) {
  const std::size_t steps = sample.steps(), n = sample.sensors();
  SequenceInputs in{Tensor(Shape{n, steps}), Tensor(Shape{n, steps}),
                    Tensor(Shape{n, steps}), Tensor(Shape{n, steps})};
  std::vector<double> column(steps);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t t = 0; t < steps; ++t) {
      const double m = sample.mask.at(t, v) != 0.0 ? 1.0 : 0.0;
      column[t] = m;
      in.mask.at(v, t) = m;
      // Mandatory zero-fill: masked cells never carry their stored value.
      in.values.at(v, t) = m != 0.0 ? sample.values.at(t, v) : 0.0;
    }
    const auto d = encoder::compute_deltas(sample.timestamps, column);
    const auto dl = encoder::deltas_from_last(sample.timestamps, column);
    for (std::size_t t = 0; t < steps; ++t) {
      in.deltas.at(v, t) = d[t];
      in.deltas_from_last.at(v, t) = dl[t];
    }
  }
  return in;
}

namespace {

// Uniform weights over each row's observed positions (zero rows stay zero).
Tensor uniform_observed_weights(const Tensor& mask) {
  Tensor w(mask.shape());
  const std::size_t width = mask.shape().back();
  for (std::size_t r = 0; r < mask.numel() / width; ++r) {
    double count = 0.0;
    for (std::size_t j = 0; j < width; ++j) count += mask[r * width + j];
    if (count == 0.0) continue;
    for (std::size_t j = 0; j < width; ++j) w[r * width + j] = mask[r * width + j] / count;
  }
  return w;
}

}  // namespace

ForwardTrace full_forward(Tape& tape, const Model& model, const IrregularSample& sample,
                          AblationVariant variant) {
  using namespace ops;
  const ModelConfig& cfg = model.config;
  const ParamStore& params = model.params;
  if (sample.sensors() != cfg.n_sensors) {
    throw DimensionError("sample '" + sample.id + "' has " +
                         std::to_string(sample.sensors()) + " sensors, model expects " +
                         std::to_string(cfg.n_sensors));
  }
  const std::size_t n = cfg.n_sensors, steps = sample.steps(), m = cfg.embed_dim;
  const SequenceInputs in = prepare_inputs(sample);
  ForwardTrace trace;

  Var states = encoder::init_node_states(tape, params, cfg, sample.static_features);
  trace.initial_states = states;

  Var obs = encoder::embed_observations(
      tape, params, tape.constant(in.values.reshaped(Shape{n * steps, 1})));
  Var time_enc = [&] {
    if (variant == AblationVariant::kNoTemporalEncoding) {
      const Tensor pe = encoder::positional_encoding(steps, m);
      Tensor tiled(Shape{n * steps, m});
      for (std::size_t v = 0; v < n; ++v) {
        std::copy(pe.data().begin(), pe.data().end(),
                  tiled.data().begin() + static_cast<long>(v * steps * m));
      }
      return tape.constant(std::move(tiled));
    }
    Var features = encoder::time2vec(
        tape, params, tape.constant(in.deltas.reshaped(Shape{n * steps, 1})));
    return encoder::project_time_encoding(tape, params, features);
  }();
  Var row_mask = tape.constant(in.mask.reshaped(Shape{n * steps, 1}));
  Var augmented = reshape(mul(add(obs, time_enc), row_mask), Shape{n, steps, m});

  const Tensor uniform = uniform_observed_weights(in.mask);
  Var sequence = [&] {
    if (variant == AblationVariant::kNoIntraSeries) {
      Var pooled = encoder::aggregate_sequence(augmented, tape.constant(uniform));
      return mul(tape.constant(in.mask.reshaped(Shape{n, steps, 1})),
                 reshape(pooled, Shape{n, 1, m}));
    }
    return encoder::encode_sequence(tape, params, cfg, augmented, in.mask);
  }();
  trace.sequence_outputs = sequence;

  Var weights = variant == AblationVariant::kNoDecayRate
                    ? tape.constant(uniform)
                    : encoder::decay_weights(encoder::decay_rate(tape, params),
                                             in.deltas_from_last, in.mask);
  trace.decay = weights;
  states = encoder::update_node_states(states, encoder::aggregate_sequence(sequence, weights));
  trace.node_states = states;

  Var embeddings = states;
  if (variant != AblationVariant::kNoInterSeries) {
    std::optional<Var> adjacency;
    if (variant != AblationVariant::kNoShortTerm) {
      trace.short_term = graph::short_term_adjacency(tape, params, cfg, states);
    }
    if (variant != AblationVariant::kNoLongTerm) {
      trace.long_term = graph::long_term_adjacency(tape, params);
    }
    if (trace.short_term && trace.long_term) {
      adjacency = graph::blend_adjacency(*trace.short_term, *trace.long_term,
                                         graph::blend_weight(tape, params));
    } else {
      adjacency = trace.short_term ? *trace.short_term : *trace.long_term;
    }
    trace.adjacency = adjacency;
    trace.sparse_adjacency = graph::sparsify(*adjacency, cfg.sparsity_k);
    embeddings = graph::gcn_forward(tape, params, cfg, states, *trace.sparse_adjacency);
    trace.gcn_output = embeddings;
  }
  trace.graph_embedding = graph::readout(tape, params, embeddings);
  trace.logits = graph::predict_logits(tape, params, *trace.graph_embedding);
  return trace;
}

Tensor predict_logits(const Model& model, const IrregularSample& sample,
                      AblationVariant variant) {
  Tape tape;
  return full_forward(tape, model, sample, variant).logits->value();
}

std::string checkpoint_text(const Model& model, const json& run_config) {
  json config = run_config.is_object() ? run_config : json::object();
  config["model"] = model.config;
  std::ostringstream out;
  out << "{\"config\":" << config.dump() << ",\"params\":{";
  const auto& entries = model.params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Parameter& p = entries[i];
    if (i > 0) out << ',';
    out << "\n" << json(p.name).dump() << ":{\"shape\":" << json(p.value.shape()).dump()
        << ",\"data\":[";
    const auto data = p.value.data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      if (k > 0) out << ',';
      out << format_double(data[k]);
    }
    out << "]}";
  }
  out << "\n}}\n";
  return out.str();
}

Checkpoint parse_checkpoint(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    json run_config = doc.at("config");
    Model model = init_model(run_config.at("model").get<ModelConfig>(), 0);
    const json& params = doc.at("params");
    if (params.size() != model.params.size()) {
      throw SchemaError("checkpoint holds " + std::to_string(params.size()) +
                        " parameters, config implies " +
                        std::to_string(model.params.size()));
    }
    for (const auto& entry : model.params.entries()) {
      if (!params.contains(entry.name)) {
        throw SchemaError("checkpoint lacks parameter '" + entry.name + "'");
      }
      const json& p = params.at(entry.name);
      const Shape shape = p.at("shape").get<Shape>();
      if (shape != entry.value.shape()) {
        throw SchemaError("parameter '" + entry.name + "' has shape " +
                          shape_to_string(shape) + ", config implies " +
                          shape_to_string(entry.value.shape()));
      }
      model.params.assign(entry.name, Tensor(shape, p.at("data").get<std::vector<double>>()));
    }
    return Checkpoint{std::move(model), std::move(run_config)};
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const json& run_config) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  out << checkpoint_text(model, run_config);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_checkpoint(buffer.str());
}

}  // namespace wavegnn
