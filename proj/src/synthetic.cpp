#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "wavegnn/dataset.hpp"
#include "wavegnn/errors.hpp"

namespace wavegnn {

namespace {

std::size_t class_bits(std::size_t n_classes) {
  std::size_t bits = 1;
  while ((std::size_t{1} << bits) < n_classes) ++bits;
  return bits;
}

// Random-phase sinusoid; one per (sample, sensor).
struct Oscillator {
  double amplitude;
  double period;
  double phase;

  double at(double t) const {
    return amplitude * std::sin(2.0 * std::numbers::pi * t / period + phase);
  }
};

}  // namespace

std::string to_string(SignalMode mode) {
  switch (mode) {
    case SignalMode::kIntra: return "intra";
    case SignalMode::kCross: return "cross";
    case SignalMode::kBoth: return "both";
  }
  return "intra";
}

SignalMode parse_signal_mode(const std::string& text) {
  if (text == "intra") return SignalMode::kIntra;
  if (text == "cross") return SignalMode::kCross;
  if (text == "both") return SignalMode::kBoth;
  throw ValidationError("unknown signal_mode '" + text + "'");
}

std::vector<std::pair<std::size_t, std::size_t>> coupled_pairs(std::size_t n_sensors,
                                                               std::size_t n_pairs) {
  const std::size_t limit = n_pairs == 0 ? n_sensors / 2 : std::min(n_pairs, n_sensors / 2);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t p = 0; p < limit; ++p) pairs.emplace_back(2 * p, 2 * p + 1);
  return pairs;
}

void validate(const SyntheticConfig& c) {
  if (c.n_samples == 0) throw ValidationError("n_samples must be positive");
  if (c.n_sensors == 0) throw ValidationError("n_sensors must be positive");
  if (c.steps == 0) throw ValidationError("steps (T) must be positive");
  if (c.n_classes < 2) throw ValidationError("n_classes must be at least 2");
  if (!(c.missing_ratio >= 0.0 && c.missing_ratio <= 0.98)) {
    throw ValidationError("missing_ratio must lie in [0, 0.98]");
  }
  if (!(c.jitter >= 0.0 && c.jitter < 1.0)) {
    throw ValidationError("jitter must lie in [0, 1)");
  }
  if (!(c.noise >= 0.0)) throw ValidationError("noise must be non-negative");
  if (!(c.coupling_lag >= 0.0 && std::isfinite(c.coupling_lag))) {
    throw ValidationError("coupling_lag must be finite and non-negative");
  }
  if (!(c.coupling_falloff >= 0.0 && c.coupling_falloff < 1.0)) {
    throw ValidationError("coupling_falloff must lie in [0, 1)");
  }
  if (c.signal_mode != SignalMode::kIntra) {
    if (c.n_sensors < 2) throw ValidationError("cross signal needs at least 2 sensors");
    if (2 * c.n_pairs > c.n_sensors) {
      throw ValidationError("n_pairs needs 2 * n_pairs <= n_sensors");
    }
    if (coupled_pairs(c.n_sensors, c.n_pairs).size() < class_bits(c.n_classes)) {
      throw ValidationError("cross signal needs at least ceil(log2(n_classes)) coupled pairs");
    }
  }
}

Dataset generate_synthetic(const SyntheticConfig& c) {
  validate(c);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t n = c.n_sensors;
  const bool intra = c.signal_mode != SignalMode::kCross;
  const bool cross = c.signal_mode != SignalMode::kIntra;

  // Dataset-level class prototypes for the intra-series signal.
  std::vector<std::vector<double>> class_mean(c.n_classes, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> class_period(c.n_classes, std::vector<double>(n, 1.0));
  std::vector<double> base_period(n);
  for (std::size_t v = 0; v < n; ++v) base_period[v] = 6.0 + 6.0 * unit(rng);
  for (std::size_t k = 0; k < c.n_classes; ++k) {
    for (std::size_t v = 0; v < n; ++v) {
      class_mean[k][v] = 0.8 * gauss(rng);
      class_period[k][v] = std::exp(0.3 * gauss(rng));
    }
  }

  const auto pairs = coupled_pairs(n, c.n_pairs);
  const std::size_t bits = class_bits(c.n_classes);
  std::vector<long> follower_of(n, -1);
  if (cross) {
    for (const auto& [d, f] : pairs) follower_of[f] = static_cast<long>(d);
  }

  Dataset ds;
  ds.n_sensors = n;
  ds.n_classes = c.n_classes;
  ds.static_dim = 0;
  ds.task_mode = TaskMode::kMulticlass;
  ds.samples.reserve(c.n_samples);

  const int id_width = static_cast<int>(std::to_string(c.n_samples).size());
  for (std::size_t i = 0; i < c.n_samples; ++i) {
    IrregularSample s;
    std::string num = std::to_string(i);
    s.id = "s" + std::string(static_cast<std::size_t>(id_width) - num.size(), '0') + num;
    s.label = i % c.n_classes;

    s.timestamps.resize(c.steps);
    double t = 0.0;
    for (std::size_t j = 0; j < c.steps; ++j) {
      if (j > 0) t += 1.0 + c.jitter * (2.0 * unit(rng) - 1.0);
      s.timestamps[j] = t;
    }

    std::vector<Oscillator> osc(n);
    for (std::size_t v = 0; v < n; ++v) {
      const double period =
          base_period[v] * (intra ? class_period[s.label][v] : 1.0);
      osc[v] = Oscillator{0.6 + 0.8 * unit(rng), period,
                          2.0 * std::numbers::pi * unit(rng)};
    }

    s.values = Tensor(Shape{c.steps, n});
    s.mask = Tensor(Shape{c.steps, n});
    for (std::size_t j = 0; j < c.steps; ++j) {
      const double tj = s.timestamps[j];
      for (std::size_t v = 0; v < n; ++v) {
        double clean;
        if (follower_of[v] >= 0) {
          const std::size_t pair_index = v / 2;
          const bool flip = ((s.label >> (pair_index % bits)) & 1U) != 0;
          const double w = std::pow(1.0 - c.coupling_falloff, static_cast<double>(pair_index));
          clean = (flip ? -w : w) *
                      osc[static_cast<std::size_t>(follower_of[v])].at(tj - c.coupling_lag) +
                  std::sqrt(1.0 - w * w) * osc[v].at(tj);
        } else {
          clean = osc[v].at(tj);
        }
        if (intra) clean += class_mean[s.label][v];
        const double value = clean + c.noise * gauss(rng);
        const bool keep = unit(rng) >= c.missing_ratio;
        s.mask.at(j, v) = keep ? 1.0 : 0.0;
        s.values.at(j, v) = keep ? value : 0.0;
      }
    }
    ds.samples.push_back(std::move(s));
  }

  // Most informative sensors first: drivers, then followers, then the rest.
  // Intra-only data ranks by the spread of class means.
  if (cross) {
    for (const auto& p : pairs) ds.informative_ranking.push_back(p.first);
    for (const auto& p : pairs) ds.informative_ranking.push_back(p.second);
    for (std::size_t v = 2 * pairs.size(); v < n; ++v) ds.informative_ranking.push_back(v);
  } else {
    std::vector<double> spread(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) {
      double mu = 0.0;
      for (std::size_t k = 0; k < c.n_classes; ++k) mu += class_mean[k][v];
      mu /= static_cast<double>(c.n_classes);
      for (std::size_t k = 0; k < c.n_classes; ++k) {
        spread[v] += (class_mean[k][v] - mu) * (class_mean[k][v] - mu);
      }
    }
    ds.informative_ranking.resize(n);
    std::iota(ds.informative_ranking.begin(), ds.informative_ranking.end(), 0);
    std::stable_sort(ds.informative_ranking.begin(), ds.informative_ranking.end(),
                     [&](std::size_t a, std::size_t b) { return spread[a] > spread[b]; });
  }
  return ds;
}

}  // namespace wavegnn
