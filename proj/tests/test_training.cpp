#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "test_support.hpp"
#include "wavegnn/errors.hpp"
#include "wavegnn/experiments.hpp"
#include "wavegnn/metrics.hpp"
#include "wavegnn/training.hpp"

using namespace wavegnn;
using testing::Rng;
using Catch::Approx;

namespace {

double ce(std::vector<double> logits, std::size_t label) {
  Tape tape;
  IrregularSample s;
  s.label = label;
  return sample_loss(tape.constant(Tensor::vector(logits)), s, TaskMode::kMulticlass).value().item();
}

ModelConfig small_model(const Dataset& ds) {
  ModelConfig c;
  c.adopt_schema(ds);
  c.embed_dim = 4;
  c.time_dim = 2;
  c.gcn_layers = 1;
  return c;
}

Dataset synthetic(std::size_t n_samples, SignalMode mode, std::uint64_t seed,
                  std::size_t sensors = 4, std::size_t steps = 8) {
  SyntheticConfig c;
  c.n_samples = n_samples;
  c.n_sensors = sensors;
  c.steps = steps;
  c.missing_ratio = 0.3;
  c.signal_mode = mode;
  c.seed = seed;
  return generate_synthetic(c);
}

Dataset subset(const Dataset& ds, std::size_t begin, std::size_t end) {
  Dataset out = ds;
  out.samples.assign(ds.samples.begin() + begin, ds.samples.begin() + end);
  return out;
}

}  // namespace

TEST_CASE("cross-entropy examples", "[training][loss]") {
  CHECK(ce(std::vector<double>(8, 0.3), 5) == Approx(std::log(8.0)).margin(1e-15));
  CHECK(ce(std::vector<double>(8, 0.3), 5) == Approx(2.0794).margin(1e-4));
  CHECK(ce({0, 1000, 0}, 1) < 1e-9);
  CHECK(ce({1, 2}, 1) == Approx(std::log1p(std::exp(-1.0))).margin(1e-15));
  CHECK(ce({1, 2}, 1) == Approx(0.31326).margin(1e-5));
  Tape tape;
  IrregularSample s;
  s.label = 3;
  REQUIRE_THROWS_AS(sample_loss(tape.constant(Tensor::vector({1, 2})), s, TaskMode::kMulticlass),
                    ContractError);
}

TEST_CASE("weighted and multilabel losses", "[training][loss]") {
  Tape tape;
  IrregularSample s;
  s.label = 1;
  Var logits = tape.constant(Tensor::vector({1, 2}));
  const double plain = sample_loss(logits, s, TaskMode::kMulticlass).value().item();
  CHECK(sample_loss(logits, s, TaskMode::kMulticlass, {1.0, 2.5}).value().item() ==
        Approx(2.5 * plain).margin(1e-15));
  s.label_vector = {1, 0};
  const double bce = sample_loss(logits, s, TaskMode::kMultilabel).value().item();
  const double expected = (std::log1p(std::exp(-1.0)) + std::log1p(std::exp(2.0))) / 2.0;
  CHECK(bce == Approx(expected).margin(1e-14));
}

TEST_CASE("loss is non-negative and ln C at uniform logits", "[training][loss][property]") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t classes = 2 + rng() % 9;
    const Tensor logits = testing::random_tensor(rng, {classes}, -20, 20);
    CHECK(ce(std::vector<double>(logits.data().begin(), logits.data().end()),
             rng() % classes) >= 0.0);
    const double c = testing::random_tensor(rng, {1}, -5, 5)[0];
    CHECK(ce(std::vector<double>(classes, c), 0) == Approx(std::log(classes)).margin(1e-14));
  }
}

TEST_CASE("adam_step", "[training][adam]") {
  ParamStore store;
  store.add("w", Tensor::vector({0.5, -1.5}));
  store.add("frozen", Tensor::vector({2.0}), false);
  AdamState state(store);
  const AdamConfig cfg;

  SECTION("zero gradient leaves parameters bitwise unchanged") {
    const ParamStore before = store;
    GradientSet g(store);
    adam_step(store, g, state, cfg);
    CHECK(store == before);
    CHECK(state.step == 1);
  }
  SECTION("first step moves by the learning rate") {
    GradientSet g(store);
    g[0] = Tensor::vector({1.0, 1.0});
    g[1] = Tensor::vector({1.0});
    adam_step(store, g, state, cfg);
    CHECK(store.value("w")[0] == Approx(0.5 - 0.001).margin(1e-10));
    CHECK(store.value("w")[1] == Approx(-1.5 - 0.001).margin(1e-10));
    CHECK(store.value("frozen")[0] == 2.0);
  }
  SECTION("non-finite gradient names the parameter") {
    GradientSet g(store);
    g[0] = Tensor::vector({std::nan(""), 0.0});
    try {
      adam_step(store, g, state, cfg);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("w") != std::string::npos);
    }
  }
}

TEST_CASE("auroc", "[metrics]") {
  CHECK(auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == 0.75);
  REQUIRE_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), UndefinedMetricError);
  REQUIRE_THROWS_AS(auroc({0.1}, {1, 0}), DimensionError);
}

TEST_CASE("auroc agrees with pair counting and ignores monotone transforms",
          "[metrics][property]") {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 7) / 7.0;  // coarse, so ties occur
      labels[i] = static_cast<int>(rng() % 2);
    }
    labels[0] = 0;
    labels[1] = 1;
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (labels[i] != 1 || labels[j] != 0) continue;
        pairs += 1.0;
        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
      }
    }
    const double a = auroc(scores, labels);
    CHECK(a == Approx(wins / pairs).margin(1e-12));
    std::vector<double> warped(n);
    for (std::size_t i = 0; i < n; ++i) warped[i] = std::exp(3.0 * scores[i]) - 7.0;
    CHECK(auroc(warped, labels) == Approx(a).margin(1e-12));
  }
}

TEST_CASE("auprc", "[metrics]") {
  CHECK(auprc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(auprc({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1}) == Approx(0.25).margin(1e-15));
  CHECK(auprc({0.3, 0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0, 0}) == Approx(0.4).margin(1e-15));
  REQUIRE_THROWS_AS(auprc({0.1, 0.2}, {0, 0}), UndefinedMetricError);
}

TEST_CASE("classification report", "[metrics]") {
  SECTION("perfect predictions") {
    const MetricsReport r =
        classification_report(Tensor::matrix({{0.9, 0.1}, {0.2, 0.8}, {0.3, 0.7}}), {0, 1, 1}, 2);
    CHECK(r.accuracy == 1.0);
    CHECK(r.weighted_f1 == 1.0);
    CHECK(r.macro_f1 == 1.0);
    CHECK(*r.auroc == 1.0);
    CHECK(*r.auprc == 1.0);
  }
  SECTION("confusion [[1,1],[1,1]]") {
    const MetricsReport r = classification_report(
        Tensor::matrix({{0.9, 0.1}, {0.1, 0.9}, {0.8, 0.2}, {0.3, 0.7}}), {0, 0, 1, 1}, 2);
    CHECK(r.confusion == std::vector<std::vector<std::size_t>>{{1, 1}, {1, 1}});
    CHECK(r.accuracy == 0.5);
    CHECK(r.weighted_f1 == Approx(0.5).margin(1e-15));
  }
  SECTION("unpredicted class has zero precision; ties go to the lower index") {
    const MetricsReport r =
        classification_report(Tensor::matrix({{0.5, 0.5, 0.0}, {0.6, 0.4, 0}, {0.2, 0.3, 0.5}}),
                              {1, 0, 2}, 3);
    CHECK(r.per_class[1].precision == 0.0);
    CHECK(r.per_class[1].recall == 0.0);
    CHECK(r.confusion[1][0] == 1);
  }
}

TEST_CASE("weighted recall equals accuracy", "[metrics][property]") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t classes = 2 + rng() % 4, n = 1 + rng() % 40;
    const Tensor scores = testing::random_tensor(rng, {n, classes}, 0, 1);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng() % classes;
    const MetricsReport r = classification_report(scores, labels, classes);
    CHECK(r.weighted_recall == Approx(r.accuracy).margin(1e-12));
    for (double m : {r.accuracy, r.weighted_precision, r.weighted_f1, r.macro_f1}) {
      CHECK((m >= 0.0 && m <= 1.0));
    }
    for (std::size_t c = 0; c < classes; ++c) {
      std::size_t row = 0;
      for (std::size_t k : r.confusion[c]) row += k;
      CHECK(row == r.per_class[c].support);
    }
  }
}

TEST_CASE("multilabel report", "[metrics]") {
  const MetricsReport r = multilabel_report(Tensor::matrix({{0.7, 0.2}, {0.4, 0.6}}),
                                            Tensor::matrix({{1, 0}, {1, 1}}));
  CHECK(r.accuracy == 0.5);
  CHECK(r.per_class[0].recall == 0.5);
  CHECK(r.per_class[1].precision == 1.0);
}

TEST_CASE("train config validation and JSON", "[training][config]") {
  TrainConfig c;
  c.class_weights = {1.0, 2.0};
  c.validate(2);
  CHECK(nlohmann::json(c).get<TrainConfig>() == c);
  TrainConfig bad = c;
  bad.patience = 0;
  REQUIRE_THROWS_AS(bad.validate(2), ValidationError);
  bad = c;
  bad.learning_rate = 0.0;
  REQUIRE_THROWS_AS(bad.validate(2), ValidationError);
  REQUIRE_THROWS_AS(c.validate(3), ValidationError);
  nlohmann::json j = c;
  j["momentum"] = 0.9;
  REQUIRE_THROWS_AS(j.get<TrainConfig>(), ValidationError);
}

TEST_CASE("early stopping keeps the best epoch", "[training]") {
  // Training sees only class 0 and validation only class 1, so every
  // update raises the validation loss.
  Dataset train_set = synthetic(24, SignalMode::kIntra, 1);
  Dataset val_set = train_set;
  for (auto& s : train_set.samples) s.label = 0;
  for (auto& s : val_set.samples) s.label = 1;
  const Model model = init_model(small_model(train_set), 3);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.05;
  cfg.patience = 1;
  const TrainResult r = train(model, train_set, val_set, cfg);
  INFO(history_csv(r.history));
  REQUIRE(r.history.size() == 2);
  CHECK(r.history[1].val_loss[0] > r.history[0].val_loss[0]);
  CHECK(r.monitors[0].best_epoch == 1);

  TrainConfig one = cfg;
  one.epochs = 1;
  const TrainResult first = train(model, train_set, Dataset{}, one);
  CHECK(r.model.params == first.model.params);
  CHECK(first.history.size() == 1);
  CHECK(first.history[0].val_loss.empty());
}

TEST_CASE("training is deterministic and thread-count independent", "[training]") {
  const Dataset ds = synthetic(40, SignalMode::kBoth, 2);
  const Dataset tr = subset(ds, 0, 30), va = subset(ds, 30, 40);
  const Model model = init_model(small_model(ds), 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 7;
  cfg.seed = 11;
  const TrainResult a = train(model, tr, va, cfg);
  const TrainResult b = train(model, tr, va, cfg);
  CHECK(a.history == b.history);
  CHECK(a.model.params == b.model.params);
  cfg.threads = 3;
  const TrainResult c = train(model, tr, va, cfg);
  CHECK(c.history == a.history);
  CHECK(c.model.params == a.model.params);
  cfg.seed = 12;
  CHECK_FALSE(train(model, tr, va, cfg).model.params == a.model.params);
}

TEST_CASE("train_multi matches separate runs", "[training]") {
  const Dataset ds = synthetic(48, SignalMode::kIntra, 3);
  const Dataset tr = subset(ds, 0, 32);
  const Dataset va = subset(ds, 32, 40), vb = subset(ds, 40, 48);
  const Model model = init_model(small_model(ds), 5);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.02;
  cfg.patience = 2;
  const TrainResult multi = train_multi(model, tr, {&va, &vb}, cfg);
  const TrainResult ra = train(model, tr, va, cfg);
  const TrainResult rb = train(model, tr, vb, cfg);
  CHECK(multi.monitors[0].best_params == ra.model.params);
  CHECK(multi.monitors[1].best_params == rb.model.params);
  CHECK(multi.monitors[0].epochs_run == ra.history.size());
  CHECK(multi.monitors[1].epochs_run == rb.history.size());
  CHECK(multi.model.params == ra.model.params);
}

TEST_CASE("training contracts", "[training]") {
  const Dataset ds = synthetic(10, SignalMode::kIntra, 4);
  const Model model = init_model(small_model(ds), 6);
  REQUIRE_THROWS_AS(train(model, Dataset{}, ds, TrainConfig{}), ContractError);
  Dataset other = synthetic(10, SignalMode::kIntra, 4, 5);
  REQUIRE_THROWS_AS(train(model, other, ds, TrainConfig{}), ContractError);
}

TEST_CASE("history CSV", "[training]") {
  const std::vector<EpochRecord> h{{1, 0.5, {0.25, std::nan("")}}, {2, 0.125, {0.5, 1.0}}};
  CHECK(history_csv(h) == "epoch,train_loss,val_loss,val_loss_1\n1,0.5,0.25,\n2,0.125,0.5,1\n");
}

TEST_CASE("intra-mode data is fitted", "[training][slow]") {
  const Dataset ds = synthetic(200, SignalMode::kIntra, 5, 4, 12);
  ModelConfig c;
  c.adopt_schema(ds);
  c.embed_dim = 8;
  const Model model = init_model(c, 7);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.learning_rate = 0.005;
  cfg.patience = 5;
  // Early stopping on the training set itself ends the run once it fits.
  const TrainResult r = train(model, ds, ds, cfg);
  INFO("epochs " << r.history.size());
  CHECK(evaluate(r.model, ds, AblationVariant::kFull).accuracy >= 0.99);
}

TEST_CASE("experiment grids", "[experiments]") {
  const Dataset ds = synthetic(40, SignalMode::kCross, 6);
  const ModelFactory factory = [&](std::uint64_t seed) {
    return init_model(small_model(ds), seed);
  };
  ExperimentConfig cfg;
  cfg.n_runs = 3;
  cfg.base_seed = 100;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  cfg.threads = 2;

  SECTION("leave-sensors-out grid shape and ratio 0") {
    const auto cells = run_leave_sensors_experiment(
        factory, ds, {0.0, 0.25, 0.5}, {DropMode::kFixed, DropMode::kRandom}, cfg);
    REQUIRE(cells.size() == 18);
    CHECK(cells[0].mode == DropMode::kFixed);
    CHECK(cells[3].ratio == 0.25);
    CHECK(cells[17].seed == 102);
    CHECK(cells[17].report.metadata.dropped_sensors.size() == 2);

    // Ratio 0 is the plain train/evaluate baseline.
    const DatasetSplit split = stratified_split(ds, cfg.ratios, cfg.split_seed);
    TrainConfig tc = cfg.train;
    tc.seed = 101;
    const TrainResult base = train(factory(101), split.train, split.val, tc);
    const MetricsReport expected = evaluate(base.model, split.test, AblationVariant::kFull);
    CHECK(cells[1].report.accuracy == expected.accuracy);
    CHECK(cells[1].report.weighted_f1 == expected.weighted_f1);

    const std::string csv = leaveout_csv(cells);
    CHECK(csv.rfind("mode,ratio,seed,metric,value\n", 0) == 0);
    CHECK(leaveout_summary_csv(cells).find("random,0.5,accuracy,") != std::string::npos);
  }
  SECTION("ablation grid") {
    const auto cells = run_ablation(
        factory, ds, {AblationVariant::kFull, AblationVariant::kNoInterSeries}, cfg);
    REQUIRE(cells.size() == 6);
    std::set<std::pair<int, std::uint64_t>> seen;
    for (const auto& c : cells) seen.insert({static_cast<int>(c.variant), c.seed});
    CHECK(seen.size() == 6);
    const std::string summary = ablation_summary_csv(cells);
    CHECK(summary.rfind("variant,accuracy_mean,accuracy_std,precision_mean", 0) == 0);
    CHECK(summary.find("\nno_inter_series,") != std::string::npos);
    cfg.threads = 1;
    const auto serial = run_ablation(
        factory, ds, {AblationVariant::kFull, AblationVariant::kNoInterSeries}, cfg);
    CHECK(ablation_csv(serial) == ablation_csv(cells));
  }
}

TEST_CASE("mean and sample std", "[experiments]") {
  const MeanStd one = mean_std({0.7});
  CHECK(one.mean == 0.7);
  CHECK(one.std == 0.0);
  const MeanStd three = mean_std({1.0, 2.0, 3.0});
  CHECK(three.mean == 2.0);
  CHECK(three.std == 1.0);
}
