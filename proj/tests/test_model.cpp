#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracle.hpp"
#include "test_support.hpp"
#include "wavegnn/errors.hpp"
#include "wavegnn/gradcheck.hpp"
#include "wavegnn/model.hpp"
#include "wavegnn/training.hpp"

using namespace wavegnn;
using testing::Rng;

namespace {

ModelConfig default_config(std::size_t n, std::size_t classes, std::size_t static_dim = 0) {
  ModelConfig c;
  c.n_sensors = n;
  c.n_classes = classes;
  c.static_dim = static_dim;
  return c;
}

double logit_diff(const Tensor& got, const oracle::Vec& expected) {
  double worst = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    worst = std::max(worst, std::abs(got[i] - expected[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("full_forward matches the whole-pipeline oracle", "[model][oracle][property]") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const testing::TinyInstance inst = testing::random_tiny_instance(rng);
    INFO("trial " << trial);
    CHECK(logit_diff(predict_logits(inst.model, inst.sample),
                     oracle::forward(inst.model, inst.sample).logits) <= 1e-8);
  }
}

TEST_CASE("default-size model matches the oracle", "[model][oracle]") {
  Rng rng(102);
  const Model model = init_model(default_config(5, 4), 3);
  for (int trial = 0; trial < 5; ++trial) {
    const IrregularSample s = testing::random_sample(rng, 12, 5, 0.5);
    CHECK(logit_diff(predict_logits(model, s), oracle::forward(model, s).logits) <= 1e-8);
  }
}

TEST_CASE("values under the mask never reach the logits", "[model][mask][property]") {
  Rng rng(103);
  const Model model = init_model(default_config(4, 3, 2), 5);
  for (int trial = 0; trial < 50; ++trial) {
    IrregularSample s = testing::random_sample(rng, 1 + rng() % 10, 4, 0.5);
    s.static_features = std::vector<double>{0.3, -0.1};
    const Tensor base = predict_logits(model, s);
    IrregularSample dirty = s;
    for (std::size_t i = 0; i < dirty.values.numel(); ++i) {
      if (dirty.mask[i] == 0.0) dirty.values[i] = testing::random_tensor(rng, {1}, -1e6, 1e6)[0];
    }
    CHECK(bitwise_equal(predict_logits(model, dirty), base));
    for (AblationVariant v : kAllVariants) {
      CHECK(bitwise_equal(predict_logits(model, dirty, v), predict_logits(model, s, v)));
    }
  }
}

TEST_CASE("forward pass contracts", "[model]") {
  const Model model = init_model(default_config(3, 4), 6);
  Rng rng(104);
  SECTION("logits have one entry per class") {
    for (std::size_t steps : {1, 2, 7}) {
      CHECK(predict_logits(model, testing::random_sample(rng, steps, 3)).shape() == Shape{4});
    }
  }
  SECTION("fully masked samples depend only on the initial states") {
    IrregularSample a = testing::random_sample(rng, 5, 3);
    IrregularSample b = testing::random_sample(rng, 9, 3);
    for (IrregularSample* s : {&a, &b}) {
      s->mask = Tensor(s->mask.shape());
      zero_fill(*s);
    }
    CHECK(bitwise_equal(predict_logits(model, a), predict_logits(model, b)));
  }
  SECTION("sensor count mismatch") {
    REQUIRE_THROWS_AS(predict_logits(model, testing::random_sample(rng, 4, 2)), DimensionError);
  }
  SECTION("config validation") {
    ModelConfig bad = default_config(3, 4);
    bad.embed_dim = 15;
    REQUIRE_THROWS_AS(init_model(bad, 0), ValidationError);
    bad = default_config(3, 1);
    REQUIRE_THROWS_AS(init_model(bad, 0), ValidationError);
  }
  SECTION("same seed, same parameters") {
    CHECK(init_model(model.config, 6).params == model.params);
    CHECK_FALSE(init_model(model.config, 7).params == model.params);
  }
}

TEST_CASE("ablation variants remove exactly their stage", "[model][ablation]") {
  Rng rng(105);
  const Model model = init_model(default_config(4, 2), 7);
  const IrregularSample s = testing::random_sample(rng, 8, 4);
  auto trace = [&](AblationVariant v) {
    Tape tape;
    ForwardTrace t = full_forward(tape, model, s, v);
    struct Snapshot {
      bool short_term, long_term, gcn;
      Tensor a_s, states, logits;
    };
    return Snapshot{t.short_term.has_value(), t.long_term.has_value(), t.gcn_output.has_value(),
                    t.short_term ? t.short_term->value() : Tensor(),
                    t.node_states->value(), t.logits->value()};
  };
  const auto full = trace(AblationVariant::kFull);
  CHECK((full.short_term && full.long_term && full.gcn));

  const auto no_long = trace(AblationVariant::kNoLongTerm);
  CHECK((no_long.short_term && !no_long.long_term));
  CHECK(bitwise_equal(no_long.a_s, full.a_s));
  CHECK(bitwise_equal(no_long.states, full.states));

  const auto no_short = trace(AblationVariant::kNoShortTerm);
  CHECK((!no_short.short_term && no_short.long_term));

  const auto no_inter = trace(AblationVariant::kNoInterSeries);
  CHECK((!no_inter.short_term && !no_inter.long_term && !no_inter.gcn));
  CHECK(bitwise_equal(no_inter.states, full.states));

  for (AblationVariant v : {AblationVariant::kNoIntraSeries, AblationVariant::kNoTemporalEncoding,
                            AblationVariant::kNoDecayRate}) {
    const auto t = trace(v);
    CHECK((t.short_term && t.long_term && t.gcn));
    CHECK_FALSE(bitwise_equal(t.states, full.states));
  }
  for (AblationVariant v : kAllVariants) {
    CHECK(parse_variant(to_string(v)) == v);
  }
  REQUIRE_THROWS_AS(parse_variant("no_such_variant"), ValidationError);
}

TEST_CASE("no_decay_rate weights observed steps uniformly", "[model][ablation]") {
  const Model model = init_model(default_config(1, 2), 8);
  IrregularSample s;
  s.id = "u";
  s.timestamps = {0, 1, 5, 6};
  s.values = Tensor::matrix({{1}, {0}, {2}, {3}});
  s.mask = Tensor::matrix({{1}, {0}, {1}, {1}});
  Tape tape;
  const Tensor w = full_forward(tape, model, s, AblationVariant::kNoDecayRate).decay->value();
  CHECK(w == Tensor::matrix({{1.0 / 3, 0, 1.0 / 3, 1.0 / 3}}));
}

TEST_CASE("logits move smoothly with the blend weight", "[model]") {
  Rng rng(106);
  Model model = init_model(default_config(4, 3), 9);
  const IrregularSample s = testing::random_sample(rng, 6, 4);
  for (double alpha_raw : {-8.0, 0.0, 8.0}) {
    model.params.assign("adj.alpha_raw", Tensor::scalar(alpha_raw));
    const Tensor a = predict_logits(model, s);
    model.params.assign("adj.alpha_raw", Tensor::scalar(alpha_raw + 1e-6));
    CHECK(max_abs_diff(predict_logits(model, s), a) / 1e-6 <= 1e3);
  }
}

TEST_CASE("model gradients match central differences", "[model][gradcheck]") {
  Rng rng(107);
  for (int trial = 0; trial < 4; ++trial) {
    testing::TinyInstance inst = testing::random_tiny_instance(rng);
    inst.sample.label = trial % inst.model.config.n_classes;
    for (AblationVariant v : kAllVariants) {
      const LossBuilder loss = [&](Tape& tape, const ParamStore& p) {
        const Model m{inst.model.config, p};
        Var logits = *full_forward(tape, m, inst.sample, v).logits;
        return sample_loss(logits, inst.sample, TaskMode::kMulticlass);
      };
      const GradCheckReport report = finite_diff_check(loss, inst.model.params, 1e-6, 1e-4);
      INFO("trial " << trial << " variant " << to_string(v));
      for (const GradCheckEntry& e : report.entries) {
        INFO(e.name << " rel " << e.max_rel_error << " abs " << e.max_abs_error);
        CHECK(e.passed);
      }
    }
  }
}

TEST_CASE("checkpoints round-trip exactly", "[model][checkpoint]") {
  Rng rng(108);
  ModelConfig c = default_config(3, 2, 2);
  c.task_mode = TaskMode::kMultilabel;
  c.sparsity_k = 25.0;
  Model model = init_model(c, 10);
  testing::scramble(model, rng);
  model.params.assign("decay.eta_raw", Tensor::scalar(0.1 + 1e-17));
  const nlohmann::json run{{"seed", 4}, {"note", "kept"}};
  const std::string text = checkpoint_text(model, run);
  const Checkpoint back = parse_checkpoint(text);
  CHECK(back.model.config == model.config);
  CHECK(back.model.params == model.params);
  CHECK(back.config.at("note") == "kept");
  CHECK(checkpoint_text(back.model, back.config) == text);

  SECTION("shape mismatch is a schema error") {
    nlohmann::json doc = nlohmann::json::parse(text);
    doc["params"]["head.b"]["shape"] = {3};
    doc["params"]["head.b"]["data"] = {0, 0, 0};
    REQUIRE_THROWS_AS(parse_checkpoint(doc.dump()), SchemaError);
  }
  SECTION("missing parameter") {
    nlohmann::json doc = nlohmann::json::parse(text);
    doc["params"].erase("head.b");
    REQUIRE_THROWS_AS(parse_checkpoint(doc.dump()), SchemaError);
  }
  SECTION("not JSON") { REQUIRE_THROWS_AS(parse_checkpoint("{oops"), ParseError); }
}
