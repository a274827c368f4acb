#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "wavegnn/cli.hpp"
#include "wavegnn/errors.hpp"

namespace wavegnn {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& section) {
  if (!j.is_object()) throw ValidationError(section + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return key == k; });
    if (!known) throw ValidationError("unknown key '" + key + "' in " + section);
  }
}

template <class T>
void get_if(const json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

json data_json(const SyntheticConfig& c) {
  return json{{"n_samples", c.n_samples},     {"n_sensors", c.n_sensors},
              {"steps", c.steps},             {"n_classes", c.n_classes},
              {"missing_ratio", c.missing_ratio}, {"signal_mode", to_string(c.signal_mode)},
              {"jitter", c.jitter},           {"noise", c.noise},
              {"coupling_lag", c.coupling_lag}, {"coupling_falloff", c.coupling_falloff},
              {"n_pairs", c.n_pairs}};
}

void read_data(const json& j, SyntheticConfig& c) {
  check_keys(j,
             {"n_samples", "n_sensors", "steps", "n_classes", "missing_ratio", "signal_mode",
              "jitter", "noise", "coupling_lag", "coupling_falloff", "n_pairs"},
             "data");
  get_if(j, "n_samples", c.n_samples);
  get_if(j, "n_sensors", c.n_sensors);
  get_if(j, "steps", c.steps);
  get_if(j, "n_classes", c.n_classes);
  get_if(j, "missing_ratio", c.missing_ratio);
  if (j.contains("signal_mode")) c.signal_mode = parse_signal_mode(j.at("signal_mode").get<std::string>());
  get_if(j, "jitter", c.jitter);
  get_if(j, "noise", c.noise);
  get_if(j, "coupling_lag", c.coupling_lag);
  get_if(j, "coupling_falloff", c.coupling_falloff);
  get_if(j, "n_pairs", c.n_pairs);
}

}  // namespace

void RunConfig::validate() const {
  SyntheticConfig d = data;
  d.seed = seed;
  wavegnn::validate(d);
  train.validate(model.n_classes ? model.n_classes : train.class_weights.size());
  for (double r : {split.train, split.val, split.test}) {
    if (!(r > 0.0)) throw ValidationError("split ratios must be positive");
  }
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
  if (experiment.runs == 0) throw ValidationError("experiment.runs must be at least 1");
  for (double r : experiment.ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw ValidationError("experiment.ratios must lie in [0, 1)");
  }
  if (experiment.modes.empty() || experiment.ratios.empty() || experiment.variants.empty()) {
    throw ValidationError("experiment grid axes must not be empty");
  }
  if (gradcheck.n_sensors < 1 || gradcheck.steps < 1 || gradcheck.n_classes < 2 ||
      gradcheck.embed_dim < 1) {
    throw ValidationError("gradcheck instance sizes are too small");
  }
  if (!(gradcheck.epsilon >= 1e-7 && gradcheck.epsilon <= 1e-4)) {
    throw ValidationError("gradcheck.epsilon must lie in [1e-7, 1e-4]");
  }
  if (!(gradcheck.tol > 0.0)) throw ValidationError("gradcheck.tol must be positive");
  if (threads == 0) throw ValidationError("threads must be at least 1");
}

void to_json(json& j, const RunConfig& c) {
  json train = c.train;
  train.erase("seed");
  train.erase("threads");
  std::vector<std::string> modes, variants;
  for (DropMode m : c.experiment.modes) modes.push_back(to_string(m));
  for (AblationVariant v : c.experiment.variants) variants.push_back(to_string(v));
  j = json{{"seed", c.seed},
           {"data", data_json(c.data)},
           {"model", c.model},
           {"train", train},
           {"split",
            {{"train", c.split.train},
             {"val", c.split.val},
             {"test", c.split.test},
             {"seed", c.split_seed}}},
           {"variant", to_string(c.variant)},
           {"experiment",
            {{"runs", c.experiment.runs},
             {"ratios", c.experiment.ratios},
             {"modes", modes},
             {"variants", variants}}},
           {"gradcheck",
            {{"n_sensors", c.gradcheck.n_sensors},
             {"steps", c.gradcheck.steps},
             {"n_classes", c.gradcheck.n_classes},
             {"embed_dim", c.gradcheck.embed_dim},
             {"epsilon", c.gradcheck.epsilon},
             {"tol", c.gradcheck.tol}}},
           {"paths", {{"data", c.data_path}, {"out", c.out_path}, {"ckpt", c.ckpt_path}}},
           {"threads", c.threads}};
}

void from_json(const json& j, RunConfig& c) {
  check_keys(j,
             {"seed", "data", "model", "train", "split", "variant", "experiment", "gradcheck",
              "paths", "threads"},
             "config");
  get_if(j, "seed", c.seed);
  if (j.contains("data")) read_data(j.at("data"), c.data);
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"epochs", "batch_size", "learning_rate", "adam_betas", "adam_eps", "patience",
                "class_weights"},
               "train (use the top-level seed and threads)");
    t.get_to(c.train);
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, {"train", "val", "test", "seed"}, "split");
    get_if(s, "train", c.split.train);
    get_if(s, "val", c.split.val);
    get_if(s, "test", c.split.test);
    get_if(s, "seed", c.split_seed);
  }
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("experiment")) {
    const json& e = j.at("experiment");
    check_keys(e, {"runs", "ratios", "modes", "variants"}, "experiment");
    get_if(e, "runs", c.experiment.runs);
    get_if(e, "ratios", c.experiment.ratios);
    if (e.contains("modes")) {
      c.experiment.modes.clear();
      for (const auto& m : e.at("modes")) c.experiment.modes.push_back(parse_drop_mode(m.get<std::string>()));
    }
    if (e.contains("variants")) {
      c.experiment.variants.clear();
      for (const auto& v : e.at("variants")) c.experiment.variants.push_back(parse_variant(v.get<std::string>()));
    }
  }
  if (j.contains("gradcheck")) {
    const json& g = j.at("gradcheck");
    check_keys(g, {"n_sensors", "steps", "n_classes", "embed_dim", "epsilon", "tol"},
               "gradcheck");
    get_if(g, "n_sensors", c.gradcheck.n_sensors);
    get_if(g, "steps", c.gradcheck.steps);
    get_if(g, "n_classes", c.gradcheck.n_classes);
    get_if(g, "embed_dim", c.gradcheck.embed_dim);
    get_if(g, "epsilon", c.gradcheck.epsilon);
    get_if(g, "tol", c.gradcheck.tol);
  }
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    check_keys(p, {"data", "out", "ckpt"}, "paths");
    get_if(p, "data", c.data_path);
    get_if(p, "out", c.out_path);
    get_if(p, "ckpt", c.ckpt_path);
  }
  get_if(j, "threads", c.threads);
  c.train.seed = c.seed;
  c.train.threads = c.threads;
  c.data.seed = c.seed;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("config " + path + ": " + e.what());
  }
  return doc.get<RunConfig>();
}

}  // namespace wavegnn
