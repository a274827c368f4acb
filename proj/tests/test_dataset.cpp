#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "test_support.hpp"
#include "wavegnn/dataset.hpp"
#include "wavegnn/errors.hpp"

using namespace wavegnn;
using testing::Rng;

namespace {

const std::string kFixture = WAVEGNN_TEST_DATA "/fixture.jsonl";

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string to_text(const Dataset& ds) {
  std::ostringstream out;
  write_jsonl(ds, out);
  return out.str();
}

Dataset from_text(const std::string& text) {
  std::istringstream in(text);
  return read_jsonl(in);
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size() || a.n_sensors != b.n_sensors || a.n_classes != b.n_classes ||
      a.static_dim != b.static_dim || a.task_mode != b.task_mode ||
      a.informative_ranking != b.informative_ranking) {
    return false;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const IrregularSample& x = a.samples[i];
    const IrregularSample& y = b.samples[i];
    if (x.id != y.id || x.label != y.label || x.label_vector != y.label_vector) return false;
    if (x.static_features != y.static_features) return false;
    if (!std::equal(x.timestamps.begin(), x.timestamps.end(), y.timestamps.begin(),
                    y.timestamps.end(), [](double p, double q) {
                      return std::bit_cast<std::uint64_t>(p) == std::bit_cast<std::uint64_t>(q);
                    })) {
      return false;
    }
    if (!bitwise_equal(x.values, y.values) || !bitwise_equal(x.mask, y.mask)) return false;
  }
  return true;
}

// Arbitrary doubles, including awkward ones that need all 17 digits.
Dataset random_dataset(Rng& rng) {
  std::uniform_int_distribution<std::size_t> small(1, 5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.n_sensors = small(rng);
  ds.n_classes = small(rng) + 1;
  ds.static_dim = rng() % 3;
  ds.task_mode = rng() % 2 ? TaskMode::kMultilabel : TaskMode::kMulticlass;
  const std::size_t n = small(rng);
  for (std::size_t i = 0; i < n; ++i) {
    IrregularSample s = testing::random_sample(rng, small(rng), ds.n_sensors, 0.5);
    s.id = "s" + std::to_string(i) + "\"q";
    for (double& t : s.timestamps) t = t * 1e-3 * (1.0 + unit(rng)) + unit(rng) * 1e-9;
    std::sort(s.timestamps.begin(), s.timestamps.end());
    for (std::size_t k = 1; k < s.timestamps.size(); ++k) {
      if (s.timestamps[k] <= s.timestamps[k - 1]) {
        s.timestamps[k] = std::nextafter(s.timestamps[k - 1], 1e9);
      }
    }
    for (double& v : s.values.data()) v = v * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    zero_fill(s);
    if (ds.static_dim > 0) {
      s.static_features = std::vector<double>(ds.static_dim);
      for (double& p : *s.static_features) p = unit(rng) - 0.5;
    }
    if (ds.task_mode == TaskMode::kMulticlass) {
      s.label = rng() % ds.n_classes;
    } else {
      for (std::size_t c = 0; c < ds.n_classes; ++c) s.label_vector.push_back(rng() % 2);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Dataset labelled(std::size_t per_class, std::size_t classes) {
  Dataset ds;
  ds.n_sensors = 1;
  ds.n_classes = classes;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      IrregularSample s;
      s.id = std::to_string(c) + "-" + std::to_string(i);
      s.timestamps = {0.0};
      s.values = Tensor(Shape{1, 1});
      s.mask = Tensor(Shape{1, 1}, 1.0);
      s.label = c;
      ds.samples.push_back(s);
    }
  }
  return ds;
}

std::set<std::string> ids(const Dataset& ds) {
  std::set<std::string> out;
  for (const auto& s : ds.samples) out.insert(s.id);
  return out;
}

}  // namespace

TEST_CASE("fixture loads with exact values and re-serializes byte for byte", "[dataset][io]") {
  const Dataset ds = load_jsonl(kFixture);
  REQUIRE(ds.size() == 1);
  const IrregularSample& s = ds.samples[0];
  CHECK(s.id == "fx-0");
  CHECK(s.timestamps == std::vector<double>{0, 0.75, 1.5, 3.25});
  CHECK(s.values.at(2, 0) == -1.25);
  CHECK(s.values.at(3, 1) == 2.125);
  CHECK(s.static_features == std::vector<double>{0.5, -1.25});
  CHECK(s.label == 1);
  CHECK(ds.informative_ranking == std::vector<std::size_t>{1, 0});
  CHECK(to_text(ds) == slurp(kFixture));
  CHECK(missing_ratio(ds) == 0.625);
}

TEST_CASE("minimal one-sample file", "[dataset][io]") {
  const Dataset ds = from_text(
      "{\"schema\":\"wavegnn-ds-v1\",\"n_sensors\":1,\"n_classes\":2,\"static_dim\":0,"
      "\"task_mode\":\"multiclass\"}\n"
      "{\"id\":\"a\",\"timestamps\":[1,2.5],\"values\":[[3],[0]],\"mask\":[[1],[0]],"
      "\"static\":null,\"label\":0}\n");
  REQUIRE(ds.size() == 1);
  CHECK(ds.samples[0].timestamps == std::vector<double>{1, 2.5});
  CHECK(ds.samples[0].values == Tensor::matrix({{3}, {0}}));
  CHECK(ds.samples[0].mask == Tensor::matrix({{1}, {0}}));
  CHECK_FALSE(ds.samples[0].static_features.has_value());
}

TEST_CASE("loader errors", "[dataset][io]") {
  const std::string header =
      "{\"schema\":\"wavegnn-ds-v1\",\"n_sensors\":1,\"n_classes\":2,\"static_dim\":0,"
      "\"task_mode\":\"multiclass\"}\n";
  const std::string good =
      "{\"id\":\"a\",\"timestamps\":[0],\"values\":[[1]],\"mask\":[[1]],\"static\":null,"
      "\"label\":1}\n";

  SECTION("empty input") {
    try {
      from_text("");
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("no samples") != std::string::npos);
    }
    REQUIRE_THROWS_AS(from_text(header), SchemaError);
  }
  SECTION("malformed line reports its number") {
    try {
      from_text(header + good + "{\"id\": oops\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SECTION("inconsistent sensor count") {
    REQUIRE_THROWS_AS(
        from_text(header + "{\"id\":\"b\",\"timestamps\":[0],\"values\":[[1,2]],"
                           "\"mask\":[[1,1]],\"static\":null,\"label\":0}\n"),
        SchemaError);
  }
  SECTION("label out of range") {
    REQUIRE_THROWS_AS(
        from_text(header + "{\"id\":\"b\",\"timestamps\":[0],\"values\":[[1]],"
                           "\"mask\":[[1]],\"static\":null,\"label\":2}\n"),
        SchemaError);
  }
  SECTION("value under a zero mask") {
    REQUIRE_THROWS_AS(
        from_text(header + "{\"id\":\"b\",\"timestamps\":[0],\"values\":[[1]],"
                           "\"mask\":[[0]],\"static\":null,\"label\":0}\n"),
        ValidationError);
  }
  SECTION("non-increasing timestamps") {
    REQUIRE_THROWS_AS(
        from_text(header + "{\"id\":\"b\",\"timestamps\":[1,1],\"values\":[[1],[1]],"
                           "\"mask\":[[1],[1]],\"static\":null,\"label\":0}\n"),
        ValidationError);
  }
  SECTION("duplicate ids") {
    REQUIRE_THROWS_AS(from_text(header + good + good), SchemaError);
  }
}

TEST_CASE("random datasets round-trip bit-exactly", "[dataset][io][property]") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const Dataset ds = random_dataset(rng);
    const std::string text = to_text(ds);
    const Dataset back = from_text(text);
    INFO("seed " << seed);
    CHECK(same_dataset(ds, back));
    CHECK(to_text(back) == text);
  }
}

TEST_CASE("missing ratio extremes", "[dataset]") {
  Dataset ds = labelled(3, 2);
  CHECK(missing_ratio(ds) == 0.0);
  for (auto& s : ds.samples) {
    s.mask = Tensor(Shape{1, 1});
    zero_fill(s);
  }
  CHECK(missing_ratio(ds) == 1.0);
}

TEST_CASE("synthetic generator", "[dataset][synthetic]") {
  SyntheticConfig c;
  c.n_samples = 60;
  c.n_sensors = 4;
  c.steps = 12;
  c.missing_ratio = 0.0;

  SECTION("no missingness") {
    for (SignalMode mode : {SignalMode::kIntra, SignalMode::kCross, SignalMode::kBoth}) {
      c.signal_mode = mode;
      const Dataset ds = generate_synthetic(c);
      CHECK(missing_ratio(ds) == 0.0);
      validate(ds);
    }
  }
  SECTION("high missingness matches the target") {
    c.n_samples = 2000;
    c.n_sensors = 6;
    c.steps = 20;
    c.missing_ratio = 0.9;
    CHECK(std::abs(missing_ratio(generate_synthetic(c)) - 0.9) <= 0.01);
  }
  SECTION("bitwise reproducible for a seed") {
    c.signal_mode = SignalMode::kBoth;
    c.missing_ratio = 0.4;
    c.seed = 77;
    CHECK(to_text(generate_synthetic(c)) == to_text(generate_synthetic(c)));
    SyntheticConfig other = c;
    other.seed = 78;
    CHECK(to_text(generate_synthetic(c)) != to_text(generate_synthetic(other)));
  }
  SECTION("labels are balanced and ranking lists every sensor") {
    c.n_classes = 3;
    const Dataset ds = generate_synthetic(c);
    std::vector<std::size_t> counts(3);
    for (const auto& s : ds.samples) ++counts[s.label];
    CHECK(counts == std::vector<std::size_t>{20, 20, 20});
    std::vector<std::size_t> ranking = ds.informative_ranking;
    std::sort(ranking.begin(), ranking.end());
    CHECK(ranking == std::vector<std::size_t>{0, 1, 2, 3});
  }
  SECTION("bad configs are rejected") {
    SyntheticConfig bad = c;
    bad.missing_ratio = 0.99;
    REQUIRE_THROWS_AS(generate_synthetic(bad), ValidationError);
    bad = c;
    bad.signal_mode = SignalMode::kCross;
    bad.n_sensors = 1;
    REQUIRE_THROWS_AS(generate_synthetic(bad), ValidationError);
    bad = c;
    bad.n_pairs = 3;
    bad.signal_mode = SignalMode::kCross;
    REQUIRE_THROWS_AS(generate_synthetic(bad), ValidationError);
    bad = c;
    bad.coupling_falloff = 1.0;
    REQUIRE_THROWS_AS(generate_synthetic(bad), ValidationError);
  }
  SECTION("falloff weakens later pairs only") {
    c.signal_mode = SignalMode::kCross;
    c.coupling_lag = 0.0;
    c.noise = 0.0;
    const Dataset full = generate_synthetic(c);
    c.coupling_falloff = 0.5;
    const Dataset weak = generate_synthetic(c);
    for (std::size_t i = 0; i < full.size(); ++i) {
      const IrregularSample& a = full.samples[i];
      const IrregularSample& b = weak.samples[i];
      for (std::size_t t = 0; t < a.steps(); ++t) {
        for (std::size_t v : {0, 1, 2}) CHECK(a.values.at(t, v) == b.values.at(t, v));
        // Fully coupled follower mirrors its driver exactly.
        CHECK(std::abs(a.values.at(t, 3)) == std::abs(a.values.at(t, 2)));
      }
    }
    CHECK_FALSE(bitwise_equal(full.samples[0].values, weak.samples[0].values));
  }
}

TEST_CASE("cross mode leaves per-sensor class means indistinguishable", "[dataset][synthetic]") {
  SyntheticConfig c;
  c.n_samples = 2000;
  c.n_sensors = 4;
  c.steps = 16;
  c.missing_ratio = 0.3;
  c.signal_mode = SignalMode::kCross;
  c.seed = 5;
  c.coupling_falloff = GENERATE(0.0, 0.5);
  const Dataset ds = generate_synthetic(c);
  // Per-sample sensor means are independent across samples; cells are not.
  for (std::size_t v = 0; v < c.n_sensors; ++v) {
    std::vector<double> by_class[2];
    for (const auto& s : ds.samples) {
      double total = 0.0, count = 0.0;
      for (std::size_t t = 0; t < s.steps(); ++t) {
        total += s.values.at(t, v);
        count += s.mask.at(t, v);
      }
      if (count > 0) by_class[s.label].push_back(total / count);
    }
    double mean[2], var[2];
    for (int k = 0; k < 2; ++k) {
      const auto& xs = by_class[k];
      mean[k] = 0.0;
      for (double x : xs) mean[k] += x / xs.size();
      var[k] = 0.0;
      for (double x : xs) var[k] += (x - mean[k]) * (x - mean[k]) / (xs.size() - 1);
    }
    const double se = std::sqrt(var[0] / by_class[0].size() + var[1] / by_class[1].size());
    INFO("sensor " << v << " diff " << mean[1] - mean[0] << " se " << se);
    CHECK(std::abs(mean[1] - mean[0]) < 3.0 * se);
  }
}

TEST_CASE("coupled pairs", "[dataset][synthetic]") {
  using P = std::pair<std::size_t, std::size_t>;
  CHECK(coupled_pairs(5) == std::vector<P>{{0, 1}, {2, 3}});
  CHECK(coupled_pairs(6, 1) == std::vector<P>{{0, 1}});
}

TEST_CASE("leave_sensors_out", "[dataset][transform]") {
  SyntheticConfig c;
  c.n_samples = 10;
  c.n_sensors = 4;
  c.missing_ratio = 0.2;
  const Dataset ds = generate_synthetic(c);

  SECTION("ratio 0 leaves the dataset unchanged") {
    const SensorDropSpec spec{DropMode::kRandom, 0.0, {}, 3};
    CHECK(to_text(leave_sensors_out(ds, spec)) == to_text(ds));
  }
  SECTION("fixed mode drops the top of the ranking") {
    const SensorDropSpec spec{DropMode::kFixed, 0.5, {2, 0, 3, 1}, 0};
    CHECK(select_dropped_sensors(spec, 4) == std::vector<std::size_t>{0, 2});
    const Dataset out = leave_sensors_out(ds, spec);
    CHECK(out.n_sensors == 4);
    for (const auto& s : out.samples) {
      for (std::size_t t = 0; t < s.steps(); ++t) {
        for (std::size_t v : {0, 2}) {
          CHECK(s.mask.at(t, v) == 0.0);
          CHECK(s.values.at(t, v) == 0.0);
        }
      }
    }
    CHECK(to_text(leave_sensors_out(out, spec)) == to_text(out));
  }
  SECTION("random mode is seeded and rounds the count") {
    const SensorDropSpec a{DropMode::kRandom, 0.3, {}, 9};
    CHECK(select_dropped_sensors(a, 17) == select_dropped_sensors(a, 17));
    CHECK(drop_count(a, 17) == 5);
    std::set<std::vector<std::size_t>> seen;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const SensorDropSpec s{DropMode::kRandom, 0.3, {}, seed};
      const auto dropped = select_dropped_sensors(s, 17);
      CHECK(dropped.size() == 5);
      CHECK(std::is_sorted(dropped.begin(), dropped.end()));
      seen.insert(dropped);
    }
    CHECK(seen.size() > 1);
    const SensorDropSpec r{DropMode::kRandom, 0.5, {}, 4};
    const Dataset once = leave_sensors_out(ds, r);
    CHECK(to_text(leave_sensors_out(once, r)) == to_text(once));
  }
  SECTION("contract violations") {
    REQUIRE_THROWS_AS(leave_sensors_out(ds, SensorDropSpec{DropMode::kFixed, 0.5, {}, 0}),
                      ContractError);
    REQUIRE_THROWS_AS(leave_sensors_out(ds, SensorDropSpec{DropMode::kRandom, 1.0, {}, 0}),
                      ContractError);
    REQUIRE_THROWS_AS(leave_sensors_out(ds, SensorDropSpec{DropMode::kRandom, 0.9, {}, 0}),
                      ContractError);
  }
}

TEST_CASE("stratified split", "[dataset][split]") {
  SECTION("single class of ten") {
    const DatasetSplit s = stratified_split(labelled(10, 1), {0.8, 0.1, 0.1}, 1);
    CHECK(s.train.size() == 8);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 1);
  }
  SECTION("two classes of fifty") {
    const DatasetSplit s = stratified_split(labelled(50, 2), {0.8, 0.1, 0.1}, 2);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      std::size_t ones = 0;
      for (const auto& x : part->samples) ones += x.label;
      const std::size_t expected = part == &s.train ? 40 : 5;
      CHECK(ones == expected);
      CHECK(part->size() - ones == expected);
    }
    CHECK(s.warnings.empty());
  }
  SECTION("ratios must sum to one") {
    REQUIRE_THROWS_AS(stratified_split(labelled(10, 1), {0.7, 0.1, 0.1}, 0), ValidationError);
  }
  SECTION("tiny classes fall back with a warning") {
    Dataset ds = labelled(20, 1);
    Dataset extra = labelled(2, 2);
    extra.samples.erase(extra.samples.begin(), extra.samples.begin() + 2);
    ds.n_classes = 2;
    ds.samples.insert(ds.samples.end(), extra.samples.begin(), extra.samples.end());
    const DatasetSplit s = stratified_split(ds, {0.8, 0.1, 0.1}, 0);
    CHECK_FALSE(s.warnings.empty());
    CHECK(s.train.size() + s.val.size() + s.test.size() == 22);
  }
  SECTION("largest remainder") {
    CHECK(largest_remainder(10, {0.8, 0.1, 0.1}) == std::vector<std::size_t>{8, 1, 1});
    CHECK(largest_remainder(5, {0.5, 0.5}) == std::vector<std::size_t>{3, 2});
  }
}

TEST_CASE("split parts are disjoint and cover the input", "[dataset][split][property]") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    Dataset ds = labelled(1 + rng() % 30, 1 + rng() % 4);
    const DatasetSplit s = stratified_split(ds, {0.6, 0.2, 0.2}, seed);
    std::set<std::string> all;
    std::size_t total = 0;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      const auto part_ids = ids(*part);
      total += part->size();
      all.insert(part_ids.begin(), part_ids.end());
    }
    CHECK(total == ds.size());
    CHECK(all == ids(ds));
    const DatasetSplit again = stratified_split(ds, {0.6, 0.2, 0.2}, seed);
    CHECK(ids(again.test) == ids(s.test));
  }
}
