#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavegnn/dataset.hpp"
#include "wavegnn/errors.hpp"

namespace wavegnn {

namespace {

constexpr const char* kSchema = "wavegnn-ds-v1";

using nlohmann::json;

void write_number_array(std::ostream& out, std::span<const double> values) {
  out << '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out << ',';
    out << format_double(values[i]);
  }
  out << ']';
}

void write_matrix(std::ostream& out, const Tensor& m, bool as_integers) {
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  out << '[';
  for (std::size_t r = 0; r < rows; ++r) {
    if (r > 0) out << ',';
    out << '[';
    for (std::size_t c = 0; c < cols; ++c) {
      if (c > 0) out << ',';
      if (as_integers) {
        out << (m.at(r, c) != 0.0 ? '1' : '0');
      } else {
        out << format_double(m.at(r, c));
      }
    }
    out << ']';
  }
  out << ']';
}

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ": " + what);
}

std::vector<double> number_array(const json& j, std::size_t line, const char* key) {
  if (!j.is_array()) fail_line(line, std::string("'") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) fail_line(line, std::string("'") + key + "' holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

Tensor number_matrix(const json& j, std::size_t line, const char* key, std::size_t rows,
                     std::size_t cols) {
  if (!j.is_array() || j.size() != rows) {
    fail_line(line, std::string("'") + key + "' must have " + std::to_string(rows) + " rows");
  }
  Tensor out(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> row = number_array(j[r], line, key);
    if (row.size() != cols) {
      throw SchemaError("line " + std::to_string(line) + ": '" + key + "' row " +
                        std::to_string(r) + " has " + std::to_string(row.size()) +
                        " entries, expected n_sensors=" + std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = row[c];
  }
  return out;
}

IrregularSample parse_sample(const json& j, const Dataset& header, std::size_t line) {
  static const std::set<std::string> kKeys = {"id",   "timestamps", "values",
                                              "mask", "static",     "label"};
  if (!j.is_object()) fail_line(line, "sample record must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) fail_line(line, "unexpected key '" + key + "'");
  }
  for (const auto& key : kKeys) {
    if (!j.contains(key)) fail_line(line, "missing key '" + key + "'");
  }
  IrregularSample s;
  if (!j["id"].is_string()) fail_line(line, "'id' must be a string");
  s.id = j["id"].get<std::string>();
  s.timestamps = number_array(j["timestamps"], line, "timestamps");
  const std::size_t steps = s.timestamps.size();
  s.values = number_matrix(j["values"], line, "values", steps, header.n_sensors);
  s.mask = number_matrix(j["mask"], line, "mask", steps, header.n_sensors);
  if (!j["static"].is_null()) {
    s.static_features = number_array(j["static"], line, "static");
  }
  const json& label = j["label"];
  if (header.task_mode == TaskMode::kMulticlass) {
    if (!label.is_number_integer() || label.get<long long>() < 0) {
      fail_line(line, "'label' must be a non-negative integer");
    }
    s.label = label.get<std::size_t>();
  } else {
    s.label_vector = number_array(label, line, "label");
  }
  return s;
}

}  // namespace

std::string format_double(double value) {
  if (value == 0.0) return std::signbit(value) ? "-0.0" : "0";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string to_string(TaskMode mode) {
  return mode == TaskMode::kMulticlass ? "multiclass" : "multilabel";
}

TaskMode parse_task_mode(const std::string& text) {
  if (text == "multiclass") return TaskMode::kMulticlass;
  if (text == "multilabel") return TaskMode::kMultilabel;
  throw ValidationError("unknown task_mode '" + text + "'");
}

void zero_fill(IrregularSample& sample) {
  for (std::size_t i = 0; i < sample.values.numel(); ++i) {
    if (sample.mask[i] == 0.0) sample.values[i] = 0.0;
  }
}

void validate(const Dataset& dataset) {
  if (dataset.samples.empty()) throw SchemaError("no samples");
  if (dataset.n_sensors == 0) throw SchemaError("n_sensors must be at least 1");
  if (dataset.n_classes == 0) throw SchemaError("n_classes must be at least 1");
  std::set<std::string> ids;
  for (const auto& s : dataset.samples) {
    const std::string where = "sample '" + s.id + "': ";
    if (!ids.insert(s.id).second) throw SchemaError(where + "duplicate id");
    if (s.timestamps.empty()) throw SchemaError(where + "needs at least one timestamp");
    for (std::size_t t = 1; t < s.timestamps.size(); ++t) {
      if (!(s.timestamps[t] > s.timestamps[t - 1])) {
        throw ValidationError(where + "timestamps must be strictly increasing");
      }
    }
    const Shape grid{s.timestamps.size(), dataset.n_sensors};
    if (s.values.shape() != grid || s.mask.shape() != grid) {
      throw SchemaError(where + "values/mask must be " + shape_to_string(grid));
    }
    for (std::size_t i = 0; i < s.mask.numel(); ++i) {
      if (s.mask[i] != 0.0 && s.mask[i] != 1.0) {
        throw ValidationError(where + "mask entries must be 0 or 1");
      }
      if (s.mask[i] == 0.0 && s.values[i] != 0.0) {
        throw ValidationError(where + "values at masked cells must be 0");
      }
      if (!std::isfinite(s.values[i])) throw ValidationError(where + "non-finite value");
    }
    if (s.static_features && s.static_features->size() != dataset.static_dim) {
      throw SchemaError(where + "static features have " +
                        std::to_string(s.static_features->size()) +
                        " entries, expected static_dim=" +
                        std::to_string(dataset.static_dim));
    }
    if (dataset.task_mode == TaskMode::kMulticlass) {
      if (s.label >= dataset.n_classes) {
        throw SchemaError(where + "label " + std::to_string(s.label) +
                          " not below n_classes=" + std::to_string(dataset.n_classes));
      }
    } else {
      if (s.label_vector.size() != dataset.n_classes) {
        throw SchemaError(where + "label vector must have n_classes entries");
      }
      for (double v : s.label_vector) {
        if (v != 0.0 && v != 1.0) throw ValidationError(where + "label entries must be 0/1");
      }
    }
  }
  for (std::size_t v : dataset.informative_ranking) {
    if (v >= dataset.n_sensors) throw SchemaError("informative ranking index out of range");
  }
}

Dataset read_jsonl(std::istream& in) {
  Dataset ds;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      fail_line(line, std::string("malformed JSON: ") + e.what());
    }
    try {
      if (!have_header) {
        if (!j.is_object() || j.value("schema", "") != kSchema) {
          throw SchemaError("line " + std::to_string(line) +
                            ": expected header with schema '" + kSchema + "'");
        }
        ds.n_sensors = j.at("n_sensors").get<std::size_t>();
        ds.n_classes = j.at("n_classes").get<std::size_t>();
        ds.static_dim = j.at("static_dim").get<std::size_t>();
        ds.task_mode = parse_task_mode(j.at("task_mode").get<std::string>());
        if (j.contains("informative_ranking")) {
          ds.informative_ranking =
              j["informative_ranking"].get<std::vector<std::size_t>>();
        }
        have_header = true;
        continue;
      }
      ds.samples.push_back(parse_sample(j, ds, line));
    } catch (const json::exception& e) {
      fail_line(line, e.what());
    }
  }
  if (!have_header || ds.samples.empty()) throw SchemaError("no samples");
  validate(ds);
  return ds;
}

void write_jsonl(const Dataset& dataset, std::ostream& out) {
  out << "{\"schema\":\"" << kSchema << "\",\"n_sensors\":" << dataset.n_sensors
      << ",\"n_classes\":" << dataset.n_classes << ",\"static_dim\":" << dataset.static_dim
      << ",\"task_mode\":\"" << to_string(dataset.task_mode) << '"';
  if (!dataset.informative_ranking.empty()) {
    out << ",\"informative_ranking\":[";
    for (std::size_t i = 0; i < dataset.informative_ranking.size(); ++i) {
      if (i > 0) out << ',';
      out << dataset.informative_ranking[i];
    }
    out << ']';
  }
  out << "}\n";
  for (const auto& s : dataset.samples) {
    out << "{\"id\":" << json(s.id).dump() << ",\"timestamps\":";
    write_number_array(out, s.timestamps);
    out << ",\"values\":";
    write_matrix(out, s.values, false);
    out << ",\"mask\":";
    write_matrix(out, s.mask, true);
    out << ",\"static\":";
    if (s.static_features) {
      write_number_array(out, *s.static_features);
    } else {
      out << "null";
    }
    out << ",\"label\":";
    if (dataset.task_mode == TaskMode::kMulticlass) {
      out << s.label;
    } else {
      out << '[';
      for (std::size_t c = 0; c < s.label_vector.size(); ++c) {
        if (c > 0) out << ',';
        out << (s.label_vector[c] != 0.0 ? '1' : '0');
      }
      out << ']';
    }
    out << "}\n";
  }
}

Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file " + path.string());
  return read_jsonl(in);
}

void save_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write dataset file " + path.string());
  write_jsonl(dataset, out);
}

double missing_ratio(const Dataset& dataset) {
  if (dataset.samples.empty()) throw ContractError("missing_ratio of an empty dataset");
  double observed = 0.0, cells = 0.0;
  for (const auto& s : dataset.samples) {
    for (double m : s.mask.data()) observed += m;
    cells += static_cast<double>(s.mask.numel());
  }
  return 1.0 - observed / cells;
}

}  // namespace wavegnn
