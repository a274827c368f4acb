#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "wavegnn/dataset.hpp"
#include "wavegnn/errors.hpp"

namespace wavegnn {

std::string to_string(DropMode mode) {
  return mode == DropMode::kFixed ? "fixed" : "random";
}

DropMode parse_drop_mode(const std::string& text) {
  if (text == "fixed") return DropMode::kFixed;
  if (text == "random") return DropMode::kRandom;
  throw ValidationError("unknown drop mode '" + text + "'");
}

std::size_t drop_count(const SensorDropSpec& spec, std::size_t n_sensors) {
  if (!(spec.ratio >= 0.0 && spec.ratio < 1.0)) {
    throw ContractError("drop ratio must lie in [0, 1)");
  }
  const auto count = static_cast<std::size_t>(
      std::llround(spec.ratio * static_cast<double>(n_sensors)));
  if (count >= n_sensors) {
    throw ContractError("drop ratio " + format_double(spec.ratio) + " removes all " +
                        std::to_string(n_sensors) + " sensors");
  }
  return count;
}

std::vector<std::size_t> select_dropped_sensors(const SensorDropSpec& spec,
                                                std::size_t n_sensors) {
  const std::size_t count = drop_count(spec, n_sensors);
  std::vector<std::size_t> dropped;
  if (spec.mode == DropMode::kFixed) {
    if (spec.informative_ranking.empty() && count > 0) {
      throw ContractError("fixed sensor drop needs an informative ranking");
    }
    std::set<std::size_t> seen;
    for (std::size_t v : spec.informative_ranking) {
      if (v >= n_sensors || !seen.insert(v).second) {
        throw ContractError("informative ranking must list distinct sensor indices");
      }
    }
    if (spec.informative_ranking.size() < count) {
      throw ContractError("informative ranking shorter than the drop count");
    }
    dropped.assign(spec.informative_ranking.begin(),
                   spec.informative_ranking.begin() + static_cast<long>(count));
  } else {
    std::vector<std::size_t> order(n_sensors);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);
    dropped.assign(order.begin(), order.begin() + static_cast<long>(count));
  }
  std::sort(dropped.begin(), dropped.end());
  return dropped;
}

Dataset leave_sensors_out(const Dataset& dataset, const SensorDropSpec& spec) {
  const std::vector<std::size_t> dropped =
      select_dropped_sensors(spec, dataset.n_sensors);
  Dataset out = dataset;
  for (auto& s : out.samples) {
    for (std::size_t t = 0; t < s.steps(); ++t) {
      for (std::size_t v : dropped) {
        s.mask.at(t, v) = 0.0;
        s.values.at(t, v) = 0.0;
      }
    }
  }
  return out;
}

std::vector<std::size_t> largest_remainder(std::size_t count,
                                           const std::vector<double>& ratios) {
  std::vector<std::size_t> sizes(ratios.size());
  std::vector<double> fraction(ratios.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    const double quota = ratios[k] * static_cast<double>(count);
    sizes[k] = static_cast<std::size_t>(std::floor(quota));
    fraction[k] = quota - std::floor(quota);
    assigned += sizes[k];
  }
  std::vector<std::size_t> order(ratios.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fraction[a] > fraction[b]; });
  for (std::size_t i = 0; assigned < count; ++i, ++assigned) {
    ++sizes[order[i % order.size()]];
  }
  return sizes;
}

namespace {

std::size_t stratum_of(const IrregularSample& s, const Dataset& ds) {
  if (ds.task_mode == TaskMode::kMulticlass) return s.label;
  for (std::size_t c = 0; c < s.label_vector.size(); ++c) {
    if (s.label_vector[c] != 0.0) return c;
  }
  return ds.n_classes;
}

}  // namespace

DatasetSplit stratified_split(const Dataset& dataset, const SplitRatios& ratios,
                              std::uint64_t seed) {
  const std::vector<double> parts{ratios.train, ratios.val, ratios.test};
  for (double r : parts) {
    if (!(r > 0.0)) throw ValidationError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }

  DatasetSplit split;
  for (Dataset* d : {&split.train, &split.val, &split.test}) {
    *d = dataset;
    d->samples.clear();
  }

  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    strata[stratum_of(dataset.samples[i], dataset)].push_back(i);
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pooled;
  auto allocate = [&](std::vector<std::size_t> members) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto sizes = largest_remainder(members.size(), parts);
    std::size_t pos = 0;
    Dataset* targets[] = {&split.train, &split.val, &split.test};
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t j = 0; j < sizes[k]; ++j) {
        targets[k]->samples.push_back(dataset.samples[members[pos++]]);
      }
    }
  };
  for (auto& [stratum, members] : strata) {
    if (members.size() < parts.size()) {
      split.warnings.push_back("class " + std::to_string(stratum) + " has only " +
                               std::to_string(members.size()) +
                               " samples; split globally instead");
      pooled.insert(pooled.end(), members.begin(), members.end());
      continue;
    }
    allocate(members);
  }
  if (!pooled.empty()) allocate(pooled);
  return split;
}

}  // namespace wavegnn
