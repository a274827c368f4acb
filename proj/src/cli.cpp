#include "wavegnn/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "wavegnn/errors.hpp"
#include "wavegnn/experiments.hpp"
#include "wavegnn/gradcheck.hpp"

namespace wavegnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Flags {
  std::string config;
  std::string data;
  std::string out;
  std::string ckpt;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::optional<std::size_t> threads;
};

void add_flags(CLI::App* sub, Flags& f, bool data, bool out, bool ckpt) {
  sub->add_option("--config", f.config, "JSON run configuration");
  if (data) sub->add_option("--data", f.data, "dataset (JSONL)");
  if (out) sub->add_option("--out", f.out, "output path");
  if (ckpt) sub->add_option("--ckpt", f.ckpt, "checkpoint JSON");
  sub->add_option("--seed", f.seed, "master seed");
  sub->add_option("--variant", f.variant, "ablation variant");
  sub->add_option("--threads", f.threads, "worker threads");
}

std::size_t env_threads() {
  const char* text = std::getenv("WAVEGNN_THREADS");
  if (text == nullptr || *text == '\0') return 0;
  char* end = nullptr;
  const long value = std::strtol(text, &end, 10);
  if (*end != '\0' || value < 1) {
    throw ValidationError(std::string("WAVEGNN_THREADS must be a positive integer, got '") +
                          text + "'");
  }
  return static_cast<std::size_t>(value);
}

/// File values first, then flags; threads fall back to WAVEGNN_THREADS.
RunConfig resolve(const Flags& f) {
  RunConfig rc = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.seed) rc.seed = *f.seed;
  if (!f.variant.empty()) rc.variant = parse_variant(f.variant);
  if (f.threads) {
    rc.threads = *f.threads;
  } else if (std::size_t env = env_threads()) {
    rc.threads = env;
  }
  if (!f.data.empty()) rc.data_path = f.data;
  if (!f.out.empty()) rc.out_path = f.out;
  if (!f.ckpt.empty()) rc.ckpt_path = f.ckpt;
  rc.train.seed = rc.seed;
  rc.train.threads = rc.threads;
  rc.data.seed = rc.seed;
  rc.validate();
  return rc;
}

void require_path(const std::string& path, const char* flag) {
  if (path.empty()) throw ValidationError(std::string("missing ") + flag);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string config_text(const RunConfig& rc) { return json(rc).dump(2) + "\n"; }

Dataset load_for_model(const RunConfig& rc, ModelConfig& model) {
  require_path(rc.data_path, "--data");
  Dataset ds = load_jsonl(rc.data_path);
  model.adopt_schema(ds);
  model.validate();
  return ds;
}

void print_metrics(std::ostream& out, const std::string& title, const MetricsReport& r) {
  out << title << ": accuracy " << std::fixed << std::setprecision(4) << r.accuracy
      << "  precision " << r.weighted_precision << "  recall " << r.weighted_recall << "  f1 "
      << r.weighted_f1;
  if (r.auroc) out << "  auroc " << *r.auroc;
  if (r.auprc) out << "  auprc " << *r.auprc;
  out << std::defaultfloat << std::setprecision(6) << '\n';
}

int cmd_gen(RunConfig rc, std::ostream& out) {
  require_path(rc.out_path, "--out");
  const Dataset ds = generate_synthetic(rc.data);
  save_jsonl(ds, rc.out_path);
  write_text(rc.out_path + ".config.json", config_text(rc));
  out << "wrote " << ds.size() << " samples (" << ds.n_sensors << " sensors, "
      << ds.n_classes << " classes, missing ratio " << missing_ratio(ds) << ") to "
      << rc.out_path << '\n';
  return 0;
}

int cmd_train(RunConfig rc, std::ostream& out, std::ostream& err) {
  require_path(rc.out_path, "--out");
  const Dataset ds = load_for_model(rc, rc.model);
  rc.train.validate(rc.model.n_classes);
  const DatasetSplit split = stratified_split(ds, rc.split, rc.split_seed);
  for (const std::string& w : split.warnings) err << "warning: " << w << '\n';

  const fs::path dir = rc.out_path;
  fs::create_directories(dir);
  write_text(dir / "config.json", config_text(rc));

  const Model initial = init_model(rc.model, rc.seed);
  const TrainResult result = train(initial, split.train, split.val, rc.train, rc.variant);
  MetricsReport report = evaluate(result.model, split.test, rc.variant);
  report.metadata.seed = rc.seed;
  report.metadata.variant = to_string(rc.variant);
  report.metadata.epochs = result.history.size();

  json run = rc;
  run["trained_epochs"] = result.history.size();
  save_checkpoint(result.model, dir / "checkpoint.json", run);
  write_text(dir / "history.csv", history_csv(result.history));
  write_text(dir / "metrics.json", report_text(report));

  out << "trained " << result.history.size() << " epochs on " << split.train.size()
      << " samples (val " << split.val.size() << ", test " << split.test.size() << ")\n";
  print_metrics(out, "test", report);
  return 0;
}

int cmd_eval(const Flags& flags, std::ostream& out) {
  std::string ckpt_path = flags.ckpt;
  if (ckpt_path.empty() && !flags.config.empty()) ckpt_path = load_run_config(flags.config).ckpt_path;
  require_path(ckpt_path, "--ckpt");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  json saved = ckpt.config;
  std::size_t epochs = 0;
  if (saved.contains("trained_epochs")) {
    epochs = saved.at("trained_epochs").get<std::size_t>();
    saved.erase("trained_epochs");
  }
  RunConfig rc = saved.get<RunConfig>();
  if (!flags.data.empty()) rc.data_path = flags.data;
  if (!flags.variant.empty()) rc.variant = parse_variant(flags.variant);
  rc.validate();

  require_path(rc.data_path, "--data");
  const Dataset ds = load_jsonl(rc.data_path);
  ModelConfig schema = ckpt.model.config;
  schema.adopt_schema(ds);
  if (!(schema == ckpt.model.config)) {
    throw SchemaError("dataset schema does not match the checkpoint's model");
  }
  const DatasetSplit split = stratified_split(ds, rc.split, rc.split_seed);
  MetricsReport report = evaluate(ckpt.model, split.test, rc.variant);
  report.metadata.seed = rc.seed;
  report.metadata.variant = to_string(rc.variant);
  report.metadata.epochs = epochs;

  const std::string text = report_text(report);
  const fs::path target = !flags.out.empty()
                              ? fs::path(flags.out) / "metrics.json"
                              : fs::path(ckpt_path).parent_path() / "eval_metrics.json";
  write_text(target, text);
  out << text;
  return 0;
}

ExperimentConfig experiment_config(const RunConfig& rc) {
  ExperimentConfig ec;
  ec.ratios = rc.split;
  ec.split_seed = rc.split_seed;
  ec.base_seed = rc.seed;
  ec.n_runs = rc.experiment.runs;
  ec.train = rc.train;
  // Cells run in parallel; each cell trains single-threaded.
  ec.threads = rc.threads;
  ec.train.threads = 1;
  return ec;
}

json reports_json(const std::vector<MetricsReport>& reports) {
  json arr = json::array();
  for (const MetricsReport& r : reports) arr.push_back(r);
  return arr;
}

int cmd_ablate(RunConfig rc, std::ostream& out) {
  require_path(rc.out_path, "--out");
  const Dataset ds = load_for_model(rc, rc.model);
  rc.train.validate(rc.model.n_classes);
  const fs::path dir = rc.out_path;
  fs::create_directories(dir);
  write_text(dir / "config.json", config_text(rc));

  const ModelConfig mc = rc.model;
  const auto cells = run_ablation([&](std::uint64_t seed) { return init_model(mc, seed); }, ds,
                                  rc.experiment.variants, experiment_config(rc));
  std::vector<MetricsReport> reports;
  for (const AblationCell& c : cells) reports.push_back(c.report);
  const std::string summary = ablation_summary_csv(cells);
  write_text(dir / "ablation_runs.csv", ablation_csv(cells));
  write_text(dir / "ablation_summary.csv", summary);
  write_text(dir / "reports.json", reports_json(reports).dump(2) + "\n");
  out << summary;
  return 0;
}

int cmd_leaveout(RunConfig rc, std::ostream& out) {
  require_path(rc.out_path, "--out");
  const Dataset ds = load_for_model(rc, rc.model);
  rc.train.validate(rc.model.n_classes);
  const fs::path dir = rc.out_path;
  fs::create_directories(dir);
  write_text(dir / "config.json", config_text(rc));

  const ModelConfig mc = rc.model;
  const auto cells = run_leave_sensors_experiment(
      [&](std::uint64_t seed) { return init_model(mc, seed); }, ds, rc.experiment.ratios,
      rc.experiment.modes, experiment_config(rc), rc.variant);
  std::vector<MetricsReport> reports;
  for (const LeaveOutCell& c : cells) reports.push_back(c.report);
  const std::string summary = leaveout_summary_csv(cells);
  write_text(dir / "leaveout.csv", leaveout_csv(cells));
  write_text(dir / "leaveout_summary.csv", summary);
  write_text(dir / "reports.json", reports_json(reports).dump(2) + "\n");
  out << summary;
  return 0;
}

/// Two-sample instance: one sample carries static features and one does
/// not, so both initialization paths receive gradients.
int cmd_gradcheck(RunConfig rc, std::ostream& out) {
  const GradCheckSettings& g = rc.gradcheck;
  SyntheticConfig sc;
  sc.n_samples = 2;
  sc.n_sensors = g.n_sensors;
  sc.steps = g.steps;
  sc.n_classes = g.n_classes;
  sc.missing_ratio = 0.4;
  sc.seed = rc.seed;
  Dataset ds = generate_synthetic(sc);
  ds.static_dim = 2;
  ds.samples[0].static_features = std::vector<double>{0.5, -1.25};

  ModelConfig mc = rc.model;
  mc.embed_dim = g.embed_dim;
  mc.adopt_schema(ds);
  mc.validate();
  const Model model = init_model(mc, rc.seed);
  const LossBuilder loss = [&](Tape& tape, const ParamStore& params) {
    const Model view{mc, params};
    std::optional<Var> total;
    for (const IrregularSample& s : ds.samples) {
      const ForwardTrace trace = full_forward(tape, view, s, rc.variant);
      Var l = sample_loss(*trace.logits, s, mc.task_mode);
      total = total ? ops::add(*total, l) : l;
    }
    return *total;
  };
  const GradCheckReport report = finite_diff_check(loss, model.params, g.epsilon, g.tol);

  json entries = json::array();
  for (const GradCheckEntry& e : report.entries) {
    out << std::left << std::setw(24) << e.name << std::right << std::setw(6) << e.scalars
        << "  rel " << std::scientific << std::setprecision(3) << e.max_rel_error << "  abs "
        << e.max_abs_error << std::defaultfloat << "  " << (e.passed ? "ok" : "FAIL") << '\n';
    entries.push_back({{"name", e.name},
                       {"scalars", e.scalars},
                       {"max_rel_error", e.max_rel_error},
                       {"max_abs_error", e.max_abs_error},
                       {"passed", e.passed}});
  }
  out << report.entries.size() << " parameters, " << report.checked_scalars << " scalars: "
      << (report.passed ? "passed" : "FAILED") << '\n';
  if (!rc.out_path.empty()) {
    const json doc{{"passed", report.passed},
                   {"checked_scalars", report.checked_scalars},
                   {"epsilon", g.epsilon},
                   {"tol", g.tol},
                   {"entries", entries}};
    write_text(fs::path(rc.out_path) / "gradcheck.json", doc.dump(2) + "\n");
    write_text(fs::path(rc.out_path) / "config.json", config_text(rc));
  }
  return report.passed ? 0 : 2;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph-based classifier for irregularly sampled multivariate time series",
               "wavegnn"};
  app.require_subcommand(1);
  Flags gen_f, train_f, eval_f, ablate_f, leave_f, grad_f;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  auto* trn = app.add_subcommand("train", "train, checkpoint and test one model");
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on its test split");
  auto* abl = app.add_subcommand("ablate", "ablation variants x seeds");
  auto* lvo = app.add_subcommand("leaveout", "leave-sensors-out grid");
  auto* grd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_flags(gen, gen_f, false, true, false);
  add_flags(trn, train_f, true, true, false);
  add_flags(evl, eval_f, true, true, true);
  add_flags(abl, ablate_f, true, true, false);
  add_flags(lvo, leave_f, true, true, false);
  add_flags(grd, grad_f, false, true, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    err << app.help();
    return 1;
  }

  try {
    if (*gen) return cmd_gen(resolve(gen_f), out);
    if (*trn) return cmd_train(resolve(train_f), out, err);
    if (*evl) return cmd_eval(eval_f, out);
    if (*abl) return cmd_ablate(resolve(ablate_f), out);
    if (*lvo) return cmd_leaveout(resolve(leave_f), out);
    if (*grd) return cmd_gradcheck(resolve(grad_f), out);
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const DeterminismError& e) {
    err << "determinism failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 1;
}

}  // namespace wavegnn
