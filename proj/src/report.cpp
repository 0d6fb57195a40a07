#include "dryfuse/report.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dryfuse/manifest.hpp"

namespace dryfuse {

const char* tool_version() { return DRYFUSE_VERSION; }

Json Provenance::to_json() const {
  Json j = {{"tool_version", tool_version},
            {"config_hash", config_hash},
            {"dataset_hash", dataset_hash},
            {"seed", seed},
            {"deterministic", deterministic}};
  if (wall_clock_seconds) j["wall_clock_seconds"] = *wall_clock_seconds;
  return j;
}

Provenance Provenance::from_json(const Json& j) {
  Provenance p;
  p.tool_version = j.at("tool_version").get<std::string>();
  p.config_hash = j.at("config_hash").get<std::string>();
  p.dataset_hash = j.at("dataset_hash").get<std::string>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.deterministic = j.at("deterministic").get<bool>();
  if (j.contains("wall_clock_seconds")) p.wall_clock_seconds = j["wall_clock_seconds"].get<double>();
  return p;
}

std::vector<FoldInfo> fold_info(const std::vector<FoldSplit>& folds, const std::vector<DryingRecord>& records) {
  std::vector<FoldInfo> out;
  for (const auto& f : folds) {
    FoldInfo info{f.label(), f.temperature, f.air_velocity, {}};
    for (auto i : f.eval) info.eval_samples.push_back(records[i].sample.sample_id);
    out.push_back(std::move(info));
  }
  return out;
}

bool has_arm(const ExperimentReport& report, const std::string& name) {
  for (const auto& a : report.arms) {
    if (a.name == name) return true;
  }
  return false;
}

namespace {

bool has_all(const ExperimentReport& r, std::initializer_list<Arm> arms) {
  for (Arm a : arms) {
    if (!has_arm(r, to_string(a))) return false;
  }
  return true;
}

Json rows_json(const std::vector<TableRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    Json j = {{"label", r.label}, {"average_rmse", r.average_rmse}};
    if (!r.group.empty()) j["dataset"] = r.group;
    j["reduction_percent"] = r.reduction_percent ? Json(*r.reduction_percent) : Json(nullptr);
    out.push_back(j);
  }
  return out;
}

Json density_json(const ErrorDensity& d) {
  return {{"label", d.label},           {"bin_width", d.bin_width}, {"bin_centers", d.bin_centers},
          {"counts", d.counts},         {"density", d.density},     {"mean", d.mean},
          {"sd", d.sd},                 {"central90_width", d.central90_width}};
}

}  // namespace

Json report_to_json(const ExperimentReport& r) {
  Json j;
  j["kind"] = r.kind;
  j["provenance"] = r.provenance.to_json();
  Json folds = Json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"label", f.label},
                     {"temperature_C", f.temperature},
                     {"air_velocity_mps", f.air_velocity},
                     {"eval_samples", f.eval_samples}});
  }
  j["folds"] = folds;
  Json samples = Json::array();
  for (const auto& rec : r.records) {
    samples.push_back({{"sample_id", rec.sample.sample_id},
                       {"run_id", rec.sample.run_id},
                       {"slices_in_run", rec.slices_in_run},
                       {"temperature_C", rec.conditions.temperature},
                       {"air_velocity_mps", rec.conditions.air_velocity},
                       {"drying_time_min", rec.conditions.drying_time},
                       {"ground_truth_mc", rec.ground_truth_mc}});
  }
  j["samples"] = samples;
  Json arms = Json::array();
  for (const auto& a : r.arms) {
    Json preds = Json::array();
    for (const auto& p : a.predictions) {
      preds.push_back({{"sample_id", p.sample_id},
                       {"run_id", p.run_id},
                       {"fold", p.fold},
                       {"prediction", p.prediction},
                       {"truth", p.truth}});
    }
    arms.push_back({{"name", a.name},
                    {"average_rmse", a.average_rmse},
                    {"fold_rmse", a.fold_rmse},
                    {"predictions", preds},
                    {"loss_history", a.loss_history}});
  }
  j["arms"] = arms;
  Json ratios = Json::array();
  for (const auto& ratio : r.sweep_ratios) ratios.push_back(ratio.label());
  j["sweep_ratios"] = ratios;

  Json tables = Json::object();
  if (has_all(r, {Arm::tabular, Arm::image_only, Arm::simplified_parallel, Arm::fusion})) {
    tables["ablation"] = rows_json(ablation_table(r.arms));
  }
  if (has_all(r, {Arm::ols_tabular, Arm::gp_tabular, Arm::tabular, Arm::ols_standard, Arm::gp_standard,
                  Arm::nn_standard, Arm::fusion})) {
    tables["baselines"] = rows_json(baseline_table(r.arms));
  }
  if (!r.sweep_ratios.empty()) {
    Json sweep = Json::array();
    for (const auto& row : sweep_table(r.arms, r.sweep_ratios)) {
      sweep.push_back({{"ratio", row.ratio.label()}, {"average_rmse", row.average_rmse}, {"fold_rmse", row.fold_rmse}});
    }
    tables["sweep"] = sweep;
  }
  j["tables"] = tables;

  Json analyses = Json::object();
  if (has_all(r, {Arm::tabular, Arm::fusion})) {
    const auto p = paired_slice_analysis(r.records, find_arm(r.arms, "tabular"), find_arm(r.arms, "fusion"));
    Json runs = Json::array();
    for (const auto& run : p.runs) {
      runs.push_back({{"run_id", run.run_id},
                      {"samples", {run.sample_a, run.sample_b}},
                      {"truth", {run.truth_a, run.truth_b}},
                      {"tabular", {run.tabular_a, run.tabular_b}},
                      {"fusion", {run.fusion_a, run.fusion_b}}});
    }
    analyses["paired_slices"] = {{"tabular_identical", p.tabular_identical},
                                 {"tabular_mae", p.tabular_mae},
                                 {"fusion_mae", p.fusion_mae},
                                 {"runs", runs}};
  }
  Json densities = Json::array();
  for (Arm a : kAblationArms) {
    if (has_arm(r, to_string(a))) densities.push_back(density_json(error_density(find_arm(r.arms, to_string(a)))));
  }
  if (!densities.empty()) analyses["error_density"] = densities;
  j["analyses"] = analyses;
  return j;
}

ExperimentReport report_from_json(const Json& j) {
  ExperimentReport r;
  try {
    r.kind = j.at("kind").get<std::string>();
    r.provenance = Provenance::from_json(j.at("provenance"));
    for (const auto& f : j.at("folds")) {
      r.folds.push_back({f.at("label").get<std::string>(), f.at("temperature_C").get<double>(),
                         f.at("air_velocity_mps").get<double>(),
                         f.at("eval_samples").get<std::vector<std::string>>()});
    }
    for (const auto& s : j.at("samples")) {
      DryingRecord rec;
      rec.sample.sample_id = s.at("sample_id").get<std::string>();
      rec.sample.run_id = s.at("run_id").get<std::string>();
      rec.slices_in_run = s.at("slices_in_run").get<int>();
      rec.conditions.temperature = s.at("temperature_C").get<double>();
      rec.conditions.air_velocity = s.at("air_velocity_mps").get<double>();
      rec.conditions.drying_time = s.at("drying_time_min").get<double>();
      rec.ground_truth_mc = s.at("ground_truth_mc").get<double>();
      r.records.push_back(std::move(rec));
    }
    for (const auto& a : j.at("arms")) {
      ArmResult arm;
      arm.name = a.at("name").get<std::string>();
      for (const auto& p : a.at("predictions")) {
        arm.predictions.push_back({p.at("sample_id").get<std::string>(), p.at("run_id").get<std::string>(),
                                   p.at("fold").get<std::size_t>(), p.at("prediction").get<double>(),
                                   p.at("truth").get<double>()});
      }
      arm.loss_history = a.at("loss_history").get<std::vector<std::vector<double>>>();
      // Tables are derived views: recompute from the predictions.
      summarize(arm, r.folds.size());
      r.arms.push_back(std::move(arm));
    }
    for (const auto& s : j.at("sweep_ratios")) r.sweep_ratios.push_back(parse_ratio(s.get<std::string>()));
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_report(const std::filesystem::path& dir, const ExperimentReport& report) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  };
  write(report.kind + ".json", report_to_json(report).dump(2) + "\n");
  if (has_all(report, {Arm::tabular, Arm::image_only, Arm::simplified_parallel, Arm::fusion})) {
    write("ablation.csv", table_csv(ablation_table(report.arms)));
  }
  if (has_all(report, {Arm::ols_tabular, Arm::gp_tabular, Arm::tabular, Arm::ols_standard, Arm::gp_standard,
                       Arm::nn_standard, Arm::fusion})) {
    write("baselines.csv", table_csv(baseline_table(report.arms)));
  }
  if (!report.sweep_ratios.empty()) write("sweep.csv", sweep_csv(sweep_table(report.arms, report.sweep_ratios)));
}

ExperimentReport read_report(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open report " + json_path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("report " + json_path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string table_csv(const std::vector<TableRow>& rows) {
  const bool grouped = !rows.empty() && !rows.front().group.empty();
  std::ostringstream out;
  out << (grouped ? "dataset,model," : "dataset,") << "average_rmse,rmse_reduction_percent\n";
  for (const auto& r : rows) {
    if (grouped) out << csv_field(r.group) << ',';
    out << csv_field(r.label) << ',' << format_number(r.average_rmse) << ','
        << (r.reduction_percent ? format_number(*r.reduction_percent) : std::string()) << '\n';
  }
  return out.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "ratio,average_rmse";
  const std::size_t folds = rows.empty() ? 0 : rows.front().fold_rmse.size();
  for (std::size_t f = 0; f < folds; ++f) out << ",fold" << f << "_rmse";
  out << '\n';
  for (const auto& r : rows) {
    out << r.ratio.label() << ',' << format_number(r.average_rmse);
    for (double v : r.fold_rmse) out << ',' << format_number(v);
    out << '\n';
  }
  return out.str();
}

std::string format_ablation_table(const std::vector<TableRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-46s %12s %15s\n", "Dataset", "Average RMSE", "RMSE reduction");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-46s %12s %15s\n", r.label.c_str(), fixed(r.average_rmse, 4).c_str(),
                  r.reduction_percent ? (fixed(*r.reduction_percent, 1) + "%").c_str() : "-");
    out << line;
  }
  return out.str();
}

std::string format_baseline_table(const std::vector<TableRow>& rows) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-31s %-18s %12s %15s\n", "Dataset", "Model", "Average RMSE", "RMSE reduction");
  out << line;
  std::string last;
  for (const auto& r : rows) {
    const std::string group = r.group == last ? "" : r.group;
    last = r.group;
    std::snprintf(line, sizeof line, "%-31s %-18s %12s %15s\n", group.c_str(), r.label.c_str(),
                  fixed(r.average_rmse, 4).c_str(),
                  r.reduction_percent ? (fixed(*r.reduction_percent, 1) + "%").c_str() : "-");
    out << line;
  }
  return out.str();
}

std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "Tabular-to-image ratio  Average RMSE\n";
  char line[80];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-23s %12s\n", r.ratio.label().c_str(), fixed(r.average_rmse, 4).c_str());
    out << line;
  }
  return out.str();
}

std::string format_paired_report(const PairedSliceReport& p) {
  std::ostringstream out;
  out << "paired runs: " << p.runs.size() << "\n"
      << "tabular predictions identical within runs: " << (p.tabular_identical ? "yes" : "no") << "\n"
      << "mean absolute per-slice error  tabular " << fixed(p.tabular_mae, 4) << "  fusion "
      << fixed(p.fusion_mae, 4) << "\n";
  return out.str();
}

std::string format_error_density(const ErrorDensity& d) {
  std::ostringstream out;
  out << d.label << ": mean " << fixed(d.mean, 4) << "  sd " << fixed(d.sd, 4) << "  central 90% width "
      << fixed(d.central90_width, 4) << "\n";
  return out.str();
}

}  // namespace dryfuse
