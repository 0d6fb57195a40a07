// dryfuse command-line interface.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "dryfuse/checkpoint.hpp"
#include "dryfuse/config.hpp"
#include "dryfuse/dataset.hpp"
#include "dryfuse/experiments.hpp"
#include "dryfuse/hash.hpp"
#include "dryfuse/manifest.hpp"
#include "dryfuse/plot.hpp"
#include "dryfuse/report.hpp"
#include "dryfuse/simulator.hpp"

namespace fs = std::filesystem;
using namespace dryfuse;

namespace {

constexpr const char* kArtifactEnv = "DRYFUSE_ARTIFACTS";

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

// Set when --lenient skipped invalid rows; the command still finishes but
// exits nonzero.
bool g_skipped_rows = false;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<bool> deterministic;
  std::optional<int> jobs;
  std::vector<std::string> overrides;
  std::string artifacts;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig c = g.config_path.empty() ? default_config() : load_config(g.config_path);
  std::string cli;
  for (const auto& o : g.overrides) {
    c = apply_override(c, o);
    cli += " " + o;
  }
  if (g.seed) {
    c.seed = *g.seed;
    cli += " seed=" + std::to_string(*g.seed);
  }
  if (g.deterministic) {
    c.deterministic = *g.deterministic;
    cli += std::string(" deterministic=") + (*g.deterministic ? "true" : "false");
  }
  if (g.jobs) {
    c.jobs = *g.jobs;
    cli += " jobs=" + std::to_string(*g.jobs);
  }
  c.check();
  std::cerr << "config: defaults" << (g.config_path.empty() ? "" : " < " + g.config_path)
            << (cli.empty() ? "" : " < cli[" + cli.substr(1) + "]") << "  hash " << config_hash(c).substr(0, 12)
            << "\n";
  return c;
}

fs::path artifact_root(const Globals& g) {
  if (!g.artifacts.empty()) return g.artifacts;
  if (const char* env = std::getenv(kArtifactEnv); env && *env) return env;
  return "artifacts";
}

ExperimentSettings settings_for(const RunConfig& c) {
  ExperimentSettings s;
  s.fusion = c.fusion;
  s.training = c.training;
  s.nn_hidden = c.baselines.nn_hidden;
  s.rgb_mode = c.baselines.rgb_mode;
  s.gp = c.baselines.gp;
  s.seed = c.seed;
  s.jobs = c.jobs;
  return s;
}

IngestResult ingest_or_fail(const fs::path& manifest, bool lenient, bool strict) {
  IngestResult r = ingest_manifest(manifest, strict);
  for (const auto& v : r.violations) std::cerr << manifest.string() << ": row " << v.row << ": " << v.message << "\n";
  if (!r.ok() && !lenient) {
    throw std::runtime_error(std::to_string(r.violations.size()) + " validation error(s) in " + manifest.string() +
                             " (use --lenient to proceed with the valid rows)");
  }
  if (!r.ok()) {
    // Lenient: drop the offending rows.
    std::set<std::size_t> bad;
    for (const auto& v : r.violations) bad.insert(v.row);
    std::vector<DryingRecord> kept;
    for (std::size_t i = 0; i < r.records.size(); ++i) {
      if (!bad.count(i + 1)) kept.push_back(r.records[i]);
    }
    std::cerr << "lenient: skipping " << r.records.size() - kept.size() << " row(s)\n";
    g_skipped_rows = true;
    r.records = std::move(kept);
  }
  return r;
}

struct LoadedData {
  PreparedDataset data;
  std::string dataset_hash;
};

LoadedData load_prepared(const fs::path& manifest, const RunConfig& c, bool lenient, bool strict) {
  IngestResult r = ingest_or_fail(manifest, lenient, strict);
  std::cerr << r.summary() << "\n";
  LoadedData out{prepare_dataset(r.records, r.root, c.preprocess, c.fusion.encoder_preset), r.dataset_hash};
  out.data.dataset_hash = r.dataset_hash;
  return out;
}

Provenance provenance_for(const RunConfig& c, const std::string& dataset_hash, double seconds) {
  Provenance p;
  p.tool_version = tool_version();
  p.config_hash = config_hash(c);
  p.dataset_hash = dataset_hash;
  p.seed = c.seed;
  p.deterministic = c.deterministic;
  if (!c.deterministic) p.wall_clock_seconds = seconds;
  return p;
}

// Marks a report directory incomplete until the work finishes.
class IncompleteMarker {
 public:
  IncompleteMarker(const fs::path& dir, const std::string& kind) : path_(dir / (kind + ".incomplete")) {
    fs::create_directories(dir);
    std::ofstream(path_) << "started\n";
  }
  void fail(const std::string& why) { std::ofstream(path_) << "failed: " << why << "\n"; }
  void done() { fs::remove(path_); }

 private:
  fs::path path_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void print_report(const ExperimentReport& r) {
  if (has_arm(r, "tabular") && has_arm(r, "image_only") && has_arm(r, "simplified_parallel") && has_arm(r, "fusion")) {
    std::cout << format_ablation_table(ablation_table(r.arms)) << "\n";
  }
  bool baselines = true;
  for (Arm a : kBaselineArms) baselines = baselines && has_arm(r, to_string(a));
  if (baselines) std::cout << format_baseline_table(baseline_table(r.arms)) << "\n";
  if (!r.sweep_ratios.empty()) std::cout << format_sweep_table(sweep_table(r.arms, r.sweep_ratios)) << "\n";
  if (has_arm(r, "tabular") && has_arm(r, "fusion")) {
    std::cout << format_paired_report(paired_slice_analysis(r.records, find_arm(r.arms, "tabular"), find_arm(r.arms, "fusion")))
              << "\n";
  }
  for (Arm a : kAblationArms) {
    if (has_arm(r, to_string(a))) std::cout << format_error_density(error_density(find_arm(r.arms, to_string(a))));
  }
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Globals& g, const std::string& out, std::size_t runs, int slices) {
  const RunConfig c = resolve_config(g);
  const auto dataset = generate_dataset(c.simulator(), c.seed, runs, slices);
  const fs::path dir = out.empty() ? artifact_root(g) / "dataset" : fs::path(out);
  const std::string hash = write_dataset(dataset, dir);
  std::cout << "wrote " << dataset.records.size() << " records to " << (dir / "manifest.csv").string() << "\n"
            << "dataset hash " << hash << "\n";
  return kOk;
}

int cmd_ingest(const std::string& manifest, bool lenient, bool strict) {
  const IngestResult r = ingest_manifest(manifest, strict);
  for (const auto& v : r.violations) std::cerr << manifest << ": row " << v.row << ": " << v.message << "\n";
  std::cout << r.summary() << "\n";
  if (!r.violations.empty()) std::cout << r.violations.size() << " violation(s)\n";
  std::cout << "dataset hash " << r.dataset_hash << "\n";
  (void)lenient;
  return r.ok() ? kOk : kFailed;
}

int cmd_preprocess(const Globals& g, const std::string& manifest, const std::string& out, bool lenient, bool strict) {
  const RunConfig c = resolve_config(g);
  const IngestResult r = ingest_or_fail(manifest, lenient, strict);
  const fs::path dir = out.empty() ? artifact_root(g) / "preprocessed" : fs::path(out);
  IncompleteMarker marker(dir, "preprocess");
  fs::create_directories(dir / "masked");
  std::ostringstream csv;
  csv << "sample_id,mean_r,mean_g,mean_b,luminance,area_px\n";
  for (const auto& rec : r.records) {
    fs::path p(rec.image_path);
    if (p.is_relative()) p = r.root / p;
    SliceImage raw;
    raw.sample_id = rec.sample.sample_id;
    raw.rgb = read_png(p);
    const PreparedSample s = preprocess_image(raw, c.preprocess);
    RgbImage masked = s.masked.rgb;
    for (int y = 0; y < masked.height; ++y) {
      for (int x = 0; x < masked.width; ++x) {
        if (!s.masked.mask->at(x, y)) masked.set(x, y, Rgb{0, 0, 0});
      }
    }
    write_png(dir / "masked" / (rec.sample.sample_id + ".png"), masked);
    const auto& f = s.features;
    csv << rec.sample.sample_id << ',' << format_number(f.mean_r) << ',' << format_number(f.mean_g) << ','
        << format_number(f.mean_b) << ',' << format_number(f.luminance()) << ',' << format_number(f.area) << '\n';
  }
  std::ofstream(dir / "features.csv", std::ios::binary) << csv.str();
  marker.done();
  std::cout << "preprocessed " << r.records.size() << " records into " << dir.string() << "\n";
  return kOk;
}

int cmd_train(const Globals& g, const std::string& manifest, const std::string& arm_name, const std::string& out,
              bool lenient, bool strict) {
  const RunConfig c = resolve_config(g);
  const Arm arm = parse_arm(arm_name);
  const auto t0 = std::chrono::steady_clock::now();
  LoadedData d = load_prepared(manifest, c, lenient, strict);
  std::vector<std::size_t> rows(d.data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  TrainedArm model = train_arm(d.data, rows, arm, settings_for(c), fold_seed(c.seed, 0));
  const fs::path path = out.empty() ? artifact_root(g) / "models" / (arm_name + ".ckpt") : fs::path(out);
  write_checkpoint(path, arm_checkpoint(model, provenance_for(c, d.dataset_hash, seconds_since(t0)).to_json()));
  if (!model.history.epoch_loss.empty()) {
    std::cout << "final training loss " << model.history.epoch_loss.back() << " after "
              << model.history.epoch_loss.size() << " epochs\n";
  }
  std::cout << "checkpoint " << path.string() << "\n";
  return kOk;
}

int cmd_evaluate(const Globals& g, const std::string& manifest, const std::string& checkpoint, const std::string& out,
                 bool lenient, bool strict) {
  const RunConfig c = resolve_config(g);
  const fs::path ckpt = checkpoint.empty() ? artifact_root(g) / "models" / "fusion.ckpt" : fs::path(checkpoint);
  const TrainedArm model = arm_from_checkpoint(read_checkpoint(ckpt));
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig used = c;
  used.fusion.encoder_preset = model.settings.fusion.encoder_preset;
  LoadedData d = load_prepared(manifest, used, lenient, strict);
  std::vector<std::size_t> rows(d.data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto preds = predict_arm(model, d.data, rows);

  ExperimentReport report;
  report.kind = "evaluate";
  report.provenance = provenance_for(c, d.dataset_hash, seconds_since(t0));
  FoldInfo all{"all", 0.0, 0.0, {}};
  ArmResult arm;
  arm.name = to_string(model.arm);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& rec = d.data.records[i];
    all.eval_samples.push_back(rec.sample.sample_id);
    arm.predictions.push_back({rec.sample.sample_id, rec.sample.run_id, 0, preds[i], rec.ground_truth_mc});
  }
  summarize(arm, 1);
  report.folds = {all};
  report.records = d.data.records;
  report.arms = {arm};
  const fs::path dir = out.empty() ? artifact_root(g) / "reports" : fs::path(out);
  write_report(dir, report);
  std::cout << arm.name << " RMSE " << arm.average_rmse << " on " << rows.size() << " records\n"
            << "report " << (dir / "evaluate.json").string() << "\n";
  return kOk;
}

int run_experiment(const Globals& g, const std::string& manifest, const std::string& out, bool lenient, bool strict,
                   const std::string& kind, const std::function<void(ExperimentReport&, const PreparedDataset&,
                                                                     const std::vector<FoldSplit>&, const RunConfig&)>& body) {
  const RunConfig c = resolve_config(g);
  const fs::path dir = out.empty() ? artifact_root(g) / "reports" : fs::path(out);
  IncompleteMarker marker(dir, kind);
  try {
    const auto t0 = std::chrono::steady_clock::now();
    LoadedData d = load_prepared(manifest, c, lenient, strict);
    const auto folds = make_folds(d.data.records, strict);
    ExperimentReport report;
    report.kind = kind;
    report.folds = fold_info(folds, d.data.records);
    report.records = d.data.records;
    body(report, d.data, folds, c);
    report.provenance = provenance_for(c, d.dataset_hash, seconds_since(t0));
    write_report(dir, report);
    marker.done();
    print_report(report);
    std::cout << "report " << (dir / (kind + ".json")).string() << "\n";
  } catch (const std::exception& e) {
    marker.fail(e.what());
    throw;
  }
  return kOk;
}

int cmd_ablate(const Globals& g, const std::string& manifest, const std::string& out, bool lenient, bool strict,
               bool baselines) {
  return run_experiment(g, manifest, out, lenient, strict, "ablation",
                        [&](ExperimentReport& report, const PreparedDataset& data, const std::vector<FoldSplit>& folds,
                            const RunConfig& c) {
                          const auto s = settings_for(c);
                          std::vector<Arm> arms(std::begin(kAblationArms), std::end(kAblationArms));
                          if (baselines) {
                            for (Arm a : kBaselineArms) {
                              if (std::find(arms.begin(), arms.end(), a) == arms.end()) arms.push_back(a);
                            }
                          }
                          for (Arm a : arms) {
                            std::cerr << "cross-validating " << to_string(a) << "\n";
                            report.arms.push_back(cross_validate(data, folds, a, s));
                          }
                        });
}

int cmd_sweep(const Globals& g, const std::string& manifest, const std::string& out, bool lenient, bool strict,
              const std::vector<std::string>& ratio_text) {
  return run_experiment(g, manifest, out, lenient, strict, "sweep",
                        [&](ExperimentReport& report, const PreparedDataset& data, const std::vector<FoldSplit>& folds,
                            const RunConfig& c) {
                          std::vector<Ratio> ratios = c.sweep.ratios;
                          if (!ratio_text.empty()) {
                            ratios.clear();
                            for (const auto& t : ratio_text) ratios.push_back(parse_ratio(t));
                          }
                          auto s = settings_for(c);
                          s.training.epochs = c.sweep.epochs;
                          for (const auto& r : ratios) {
                            std::cerr << "cross-validating ratio " << r.label() << "\n";
                            report.arms.push_back(ratio_sweep(data, folds, {r}, s).front());
                          }
                          report.sweep_ratios = ratios;
                        });
}

int cmd_report(const std::string& path, const std::string& plots) {
  const ExperimentReport r = read_report(path);
  const auto& p = r.provenance;
  std::cout << r.kind << " report  tool " << p.tool_version << "  config " << p.config_hash.substr(0, 12)
            << "  dataset " << p.dataset_hash.substr(0, 12) << "  seed " << p.seed << "\n\n";
  print_report(r);
  if (r.kind == "evaluate") {
    for (const auto& a : r.arms) std::cout << a.name << " RMSE " << a.average_rmse << "\n";
  }
  if (!plots.empty()) {
    fs::create_directories(plots);
    std::vector<ArmResult> ablation;
    std::vector<ErrorDensity> densities;
    for (Arm a : kAblationArms) {
      if (!has_arm(r, to_string(a))) continue;
      // Scatter for the first fold (one drying condition), as a readable subset.
      ArmResult subset = find_arm(r.arms, to_string(a));
      std::erase_if(subset.predictions, [](const RecordPrediction& rp) { return rp.fold != 0; });
      ablation.push_back(subset);
      densities.push_back(error_density(find_arm(r.arms, to_string(a))));
    }
    if (r.kind == "evaluate") ablation = r.arms;
    if (!ablation.empty()) write_scatter_plot(fs::path(plots) / "scatter.png", ablation);
    if (!densities.empty()) write_density_plot(fs::path(plots) / "error_density.png", densities);
    if (!r.sweep_ratios.empty()) write_trend_plot(fs::path(plots) / "ratio_trend.png", sweep_table(r.arms, r.sweep_ratios));
    std::cout << "plots written to " << plots << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dryfuse: moisture-content prediction from drying conditions and slice images"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration (layered over the built-in defaults)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_flag("--deterministic,!--no-deterministic", g.deterministic, "Byte-reproducible artifacts (no wall clock)");
  app.add_option("--jobs", g.jobs, "Parallel cross-validation folds");
  app.add_option("--set", g.overrides, "Config override, e.g. training.epochs=50 (repeatable)");
  app.add_option("--artifacts", g.artifacts, std::string("Artifact root (default $") + kArtifactEnv + " or ./artifacts)");

  std::string manifest, out, arm = "fusion", checkpoint, report_path, plots;
  bool lenient = false, strict = false, baselines = false;
  std::size_t runs = 0;
  int slices = 0;
  std::vector<std::string> ratios;

  auto add_data_opts = [&](CLI::App* sub) {
    sub->add_option("manifest", manifest, "Dataset manifest.csv")->required();
    sub->add_flag("--lenient", lenient, "Skip invalid rows instead of failing");
    sub->add_flag("--strict", strict, "Require the 3x2 experimental grid and 70-250 min drying times");
  };

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset (manifest.csv + images/)");
  sim->add_option("--out", out, "Output directory (default <artifacts>/dataset)");
  sim->add_option("--runs", runs, "Only the first N runs of the design");
  sim->add_option("--slices", slices, "Slices per run (overrides the design)");

  auto* ing = app.add_subcommand("ingest", "Validate a manifest and its images");
  add_data_opts(ing);

  auto* pre = app.add_subcommand("preprocess", "Calibrate, segment and extract features");
  add_data_opts(pre);
  pre->add_option("--out", out, "Output directory (default <artifacts>/preprocessed)");

  auto* trn = app.add_subcommand("train", "Train one model on the whole dataset");
  add_data_opts(trn);
  trn->add_option("--arm", arm, "fusion, image_only, tabular, simplified_parallel, nn_standard, ols_*, gp_*");
  trn->add_option("--out", out, "Checkpoint path (default <artifacts>/models/<arm>.ckpt)");

  auto* evl = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  add_data_opts(evl);
  evl->add_option("--checkpoint", checkpoint, "Checkpoint (default <artifacts>/models/fusion.ckpt)");
  evl->add_option("--out", out, "Report directory (default <artifacts>/reports)");

  auto* abl = app.add_subcommand("ablate", "Condition-grouped cross-validation of the ablation arms");
  add_data_opts(abl);
  abl->add_flag("--baselines", baselines, "Also run the OLS/GP/NN baselines");
  abl->add_option("--out", out, "Report directory (default <artifacts>/reports)");

  auto* swp = app.add_subcommand("sweep-ratio", "Cross-validate the fusion model over tabular:image ratios");
  add_data_opts(swp);
  swp->add_option("--ratios", ratios, "Ratios like 8:1 (default: sweep.ratios)");
  swp->add_option("--out", out, "Report directory (default <artifacts>/reports)");

  auto* rep = app.add_subcommand("report", "Render a report as tables and plots");
  rep->add_option("report", report_path, "Report JSON")->required()->check(CLI::ExistingFile);
  rep->add_option("--plots", plots, "Directory for PNG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  auto finish = [](int code) {
    if (code == kOk && g_skipped_rows) {
      std::cerr << "warning: invalid manifest rows were skipped; exiting with status " << kFailed << "\n";
      return kFailed;
    }
    return code;
  };
  try {
    if (*sim) return cmd_simulate(g, out, runs, slices);
    if (*ing) return cmd_ingest(manifest, lenient, strict);
    if (*pre) return finish(cmd_preprocess(g, manifest, out, lenient, strict));
    if (*trn) return finish(cmd_train(g, manifest, arm, out, lenient, strict));
    if (*evl) return finish(cmd_evaluate(g, manifest, checkpoint, out, lenient, strict));
    if (*abl) return finish(cmd_ablate(g, manifest, out, lenient, strict, baselines));
    if (*swp) return finish(cmd_sweep(g, manifest, out, lenient, strict, ratios));
    if (*rep) return cmd_report(report_path, plots);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointNotFound& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  } catch (const ManifestParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
  return kUsage;
}
