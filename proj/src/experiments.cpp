#include "dryfuse/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <numeric>
#include <thread>

#include "dryfuse/rng.hpp"
#include "dryfuse/simulator.hpp"

namespace dryfuse {

namespace {

std::string trim_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string FoldSplit::label() const {
  return trim_number(temperature) + "C/" + trim_number(air_velocity);
}

std::vector<FoldSplit> make_folds(const std::vector<DryingRecord>& records, bool strict) {
  std::map<std::pair<double, double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& c = records[i].conditions;
    groups[{c.temperature, c.air_velocity}].push_back(i);
  }
  if (groups.size() < 2) {
    throw UnevaluableFold("cross-validation needs at least two condition combinations, found " +
                          std::to_string(groups.size()));
  }
  if (strict) {
    for (double t : {60.0, 70.0, 80.0}) {
      for (double v : {1.5, 2.5}) {
        if (!groups.count({t, v})) {
          throw UnevaluableFold("strict folds: combination " + trim_number(t) + "C/" + trim_number(v) +
                                " is missing");
        }
      }
    }
    if (groups.size() != 6) throw UnevaluableFold("strict folds: records must span exactly the 3x2 grid");
  }
  std::vector<FoldSplit> folds;
  for (const auto& [key, members] : groups) {
    FoldSplit f;
    f.temperature = key.first;
    f.air_velocity = key.second;
    if (members.size() < 2) {
      throw UnevaluableFold("combination " + f.label() + " has " + std::to_string(members.size()) +
                            " record(s); at least 2 are needed");
    }
    f.eval = members;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& c = records[i].conditions;
      if (!(c.temperature == key.first && c.air_velocity == key.second)) f.train.push_back(i);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

double rmse(std::span<const double> predictions, std::span<const double> truths) {
  if (predictions.size() != truths.size()) throw std::invalid_argument("rmse: length mismatch");
  if (predictions.empty()) throw std::invalid_argument("rmse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - truths[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predictions.size()));
}

const char* to_string(Arm arm) {
  switch (arm) {
    case Arm::tabular: return "tabular";
    case Arm::image_only: return "image_only";
    case Arm::simplified_parallel: return "simplified_parallel";
    case Arm::fusion: return "fusion";
    case Arm::ols_tabular: return "ols_tabular";
    case Arm::gp_tabular: return "gp_tabular";
    case Arm::ols_standard: return "ols_standard";
    case Arm::gp_standard: return "gp_standard";
    case Arm::nn_standard: return "nn_standard";
  }
  return "?";
}

Arm parse_arm(const std::string& name) {
  for (Arm a : {Arm::tabular, Arm::image_only, Arm::simplified_parallel, Arm::fusion, Arm::ols_tabular,
                Arm::gp_tabular, Arm::ols_standard, Arm::gp_standard, Arm::nn_standard}) {
    if (name == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown arm '" + name + "'");
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  Rng rng = make_substream(seed, 0xf01d0000ULL + fold);
  return rng();
}

void summarize(ArmResult& result, std::size_t fold_count) {
  std::vector<std::vector<double>> p(fold_count), t(fold_count);
  for (const auto& r : result.predictions) {
    if (r.fold >= fold_count) throw std::invalid_argument("prediction refers to unknown fold");
    p[r.fold].push_back(r.prediction);
    t[r.fold].push_back(r.truth);
  }
  result.fold_rmse.clear();
  for (std::size_t f = 0; f < fold_count; ++f) result.fold_rmse.push_back(rmse(p[f], t[f]));
  result.average_rmse = std::accumulate(result.fold_rmse.begin(), result.fold_rmse.end(), 0.0) /
                        static_cast<double>(fold_count);
}

namespace {

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

Vector targets_of(const PreparedDataset& data, const std::vector<std::size_t>& idx) {
  Vector y(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) y(static_cast<Eigen::Index>(i)) = data.records[idx[i]].ground_truth_mc;
  return y;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

TrainingData network_data(const PreparedDataset& data, Arm arm, const Matrix& x,
                          const std::vector<std::size_t>& idx, const Vector& y) {
  TrainingData d;
  switch (arm) {
    case Arm::simplified_parallel:
      d = design_training_data(x, y, 3);
      break;
    case Arm::image_only:
      d.targets = y.transpose();
      break;
    default:
      d = design_training_data(x, y, static_cast<int>(x.cols()));
  }
  if (uses_images(arm)) {
    for (auto i : idx) d.images.push_back(&data.images[i]);
    d.image_size = data.image_size;
  }
  return d;
}

}  // namespace

DesignMode design_mode(Arm arm) {
  switch (arm) {
    case Arm::nn_standard:
    case Arm::ols_standard:
    case Arm::gp_standard: return DesignMode::standard_fusion;
    case Arm::simplified_parallel: return DesignMode::simplified_parallel;
    default: return DesignMode::tabular_only;
  }
}

bool uses_images(Arm arm) { return arm == Arm::fusion || arm == Arm::image_only; }

Matrix arm_design(const PreparedDataset& data, Arm arm, RgbMode rgb) {
  if (arm == Arm::image_only) return Matrix(static_cast<Eigen::Index>(data.size()), 0);
  const DesignMode mode = design_mode(arm);
  // The simplified-parallel feature branch always sees (luminance, area).
  if (mode == DesignMode::simplified_parallel) rgb = RgbMode::luminance;
  return build_design_matrix(data.records, mode == DesignMode::tabular_only ? nullptr : &data.features, mode, rgb)
      .values;
}

std::unique_ptr<Regressor> make_network(Arm arm, const ExperimentSettings& settings, std::uint64_t seed) {
  FusionConfig fc = settings.fusion;
  fc.seed = seed;
  const int standard_cols = settings.rgb_mode == RgbMode::luminance ? 5 : 7;
  switch (arm) {
    case Arm::tabular: return std::make_unique<MlpModel>(3, settings.nn_hidden, seed);
    case Arm::nn_standard: return std::make_unique<MlpModel>(standard_cols, settings.nn_hidden, seed);
    case Arm::simplified_parallel: return std::make_unique<SimplifiedParallelModel>(fc, 3, 2);
    case Arm::fusion: return std::make_unique<FusionModel>(fc, 3);
    case Arm::image_only: return std::make_unique<ImageOnlyModel>(fc);
    default: return nullptr;
  }
}

TrainedArm train_arm(const PreparedDataset& data, const std::vector<std::size_t>& rows, Arm arm,
                     const ExperimentSettings& settings, std::uint64_t seed) {
  TrainedArm m;
  m.arm = arm;
  m.settings = settings;
  m.seed = seed;
  const Matrix all = arm_design(data, arm, settings.rgb_mode);
  Matrix x = rows_of(all, rows);
  if (x.cols() > 0) {
    m.standardizer = Standardizer::fit(x);
    x = m.standardizer.apply(x);
  }
  const Vector y = targets_of(data, rows);
  switch (arm) {
    case Arm::ols_tabular:
    case Arm::ols_standard:
      m.ols = fit_ols(x, y);
      break;
    case Arm::gp_tabular:
    case Arm::gp_standard:
      m.gp = fit_gp(x, y, settings.gp);
      break;
    default: {
      TrainingConfig tc = settings.training;
      tc.seed = seed;
      m.network = make_network(arm, settings, seed);
      m.history = train(*m.network, network_data(data, arm, x, rows, y), tc);
    }
  }
  return m;
}

std::vector<double> predict_arm(const TrainedArm& m, const PreparedDataset& data,
                                const std::vector<std::size_t>& rows) {
  Matrix x = rows_of(arm_design(data, m.arm, m.settings.rgb_mode), rows);
  if (x.cols() > 0) x = m.standardizer.apply(x);
  switch (m.arm) {
    case Arm::ols_tabular:
    case Arm::ols_standard: return to_std(predict_ols(m.ols, x));
    case Arm::gp_tabular:
    case Arm::gp_standard: return to_std(predict_gp(m.gp, x));
    default:
      if (!m.network) throw std::logic_error("predict_arm: arm has no trained network");
      return predict_each(*m.network,
                          network_data(data, m.arm, x, rows, Vector::Zero(static_cast<Eigen::Index>(rows.size()))));
  }
}

std::vector<double> fit_predict(const PreparedDataset& data, const std::vector<std::size_t>& train,
                                const std::vector<std::size_t>& eval, Arm arm,
                                const ExperimentSettings& settings, std::uint64_t seed,
                                std::vector<double>* loss_history) {
  TrainedArm m = train_arm(data, train, arm, settings, seed);
  if (loss_history != nullptr) *loss_history = m.history.epoch_loss;
  return predict_arm(m, data, eval);
}

ArmResult cross_validate(const PreparedDataset& data, const std::vector<FoldSplit>& folds, Arm arm,
                         const ExperimentSettings& settings) {
  const std::size_t k = folds.size();
  std::vector<std::vector<double>> preds(k), losses(k);
  std::vector<std::exception_ptr> errors(k);
  auto run_fold = [&](std::size_t f) {
    try {
      preds[f] = fit_predict(data, folds[f].train, folds[f].eval, arm, settings, fold_seed(settings.seed, f),
                             &losses[f]);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, settings.jobs)), k);
  if (workers <= 1) {
    for (std::size_t f = 0; f < k; ++f) run_fold(f);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t f = w; f < k; f += workers) run_fold(f);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  ArmResult r;
  r.name = to_string(arm);
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t i = 0; i < folds[f].eval.size(); ++i) {
      const auto& rec = data.records[folds[f].eval[i]];
      r.predictions.push_back({rec.sample.sample_id, rec.sample.run_id, f, preds[f][i], rec.ground_truth_mc});
    }
    if (!losses[f].empty()) r.loss_history.push_back(std::move(losses[f]));
  }
  summarize(r, k);
  return r;
}

// ---------------------------------------------------------------------------

double reduction_percent(double other_rmse, double fusion_rmse) {
  return (other_rmse - fusion_rmse) / other_rmse * 100.0;
}

const ArmResult& find_arm(const std::vector<ArmResult>& arms, const std::string& name) {
  for (const auto& a : arms) {
    if (a.name == name) return a;
  }
  throw std::invalid_argument("report has no results for '" + name + "'");
}

std::vector<TableRow> ablation_table(const std::vector<ArmResult>& arms) {
  const double fusion = find_arm(arms, "fusion").average_rmse;
  const std::pair<Arm, const char*> rows[] = {
      {Arm::tabular, "Tabular"},
      {Arm::image_only, "Image only"},
      {Arm::simplified_parallel, "Tabular data with simplified image features"},
      {Arm::fusion, "Multi-modal data fusion"},
  };
  std::vector<TableRow> out;
  for (const auto& [arm, label] : rows) {
    TableRow row{"", label, find_arm(arms, to_string(arm)).average_rmse, std::nullopt};
    if (arm != Arm::fusion) row.reduction_percent = reduction_percent(row.average_rmse, fusion);
    out.push_back(row);
  }
  return out;
}

std::vector<TableRow> baseline_table(const std::vector<ArmResult>& arms) {
  const double fusion = find_arm(arms, "fusion").average_rmse;
  const std::tuple<Arm, const char*, const char*> rows[] = {
      {Arm::ols_tabular, "Tabular-only", "Linear regression"},
      {Arm::gp_tabular, "Tabular-only", "GP"},
      {Arm::tabular, "Tabular-only", "NN"},
      {Arm::ols_standard, "Standard tabular-image fusion", "Linear regression"},
      {Arm::gp_standard, "Standard tabular-image fusion", "GP"},
      {Arm::nn_standard, "Standard tabular-image fusion", "NN"},
      {Arm::fusion, "Multi-modal data fusion", "Our method"},
  };
  std::vector<TableRow> out;
  for (const auto& [arm, group, label] : rows) {
    TableRow row{group, label, find_arm(arms, to_string(arm)).average_rmse, std::nullopt};
    if (arm != Arm::fusion) row.reduction_percent = reduction_percent(row.average_rmse, fusion);
    out.push_back(row);
  }
  return out;
}

std::string sweep_arm_name(Ratio ratio) { return "fusion@" + ratio.label(); }

std::vector<ArmResult> ratio_sweep(const PreparedDataset& data, const std::vector<FoldSplit>& folds,
                                   const std::vector<Ratio>& ratios, const ExperimentSettings& settings) {
  std::vector<ArmResult> out;
  for (const auto& ratio : ratios) {
    ExperimentSettings s = settings;
    s.fusion.ratio = ratio;
    ArmResult r = cross_validate(data, folds, Arm::fusion, s);
    r.name = sweep_arm_name(ratio);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SweepRow> sweep_table(const std::vector<ArmResult>& arms, const std::vector<Ratio>& ratios) {
  std::vector<SweepRow> out;
  for (const auto& ratio : ratios) {
    const auto& a = find_arm(arms, sweep_arm_name(ratio));
    out.push_back({ratio, a.average_rmse, a.fold_rmse});
  }
  return out;
}

// ---------------------------------------------------------------------------

PairedSliceReport paired_slice_analysis(const std::vector<DryingRecord>& records, const ArmResult& tabular,
                                        const ArmResult& fusion) {
  std::map<std::string, double> tab, fus;
  for (const auto& p : tabular.predictions) tab[p.sample_id] = p.prediction;
  for (const auto& p : fusion.predictions) fus[p.sample_id] = p.prediction;

  std::map<std::string, std::vector<const DryingRecord*>> runs;
  for (const auto& r : records) {
    if (r.slices_in_run == 2) runs[r.sample.run_id].push_back(&r);
  }
  PairedSliceReport out;
  double tab_err = 0.0, fus_err = 0.0;
  std::size_t n = 0;
  for (auto& [run_id, members] : runs) {
    if (members.size() != 2) continue;
    const auto& a = *members[0];
    const auto& b = *members[1];
    const auto ids = {a.sample.sample_id, b.sample.sample_id};
    bool have = true;
    for (const auto& id : ids) have = have && tab.count(id) && fus.count(id);
    if (!have) continue;
    PairedRun pr{run_id,
                 a.sample.sample_id,
                 b.sample.sample_id,
                 a.ground_truth_mc,
                 b.ground_truth_mc,
                 tab[a.sample.sample_id],
                 tab[b.sample.sample_id],
                 fus[a.sample.sample_id],
                 fus[b.sample.sample_id]};
    out.tabular_identical = out.tabular_identical && pr.tabular_a == pr.tabular_b;
    tab_err += std::abs(pr.tabular_a - pr.truth_a) + std::abs(pr.tabular_b - pr.truth_b);
    fus_err += std::abs(pr.fusion_a - pr.truth_a) + std::abs(pr.fusion_b - pr.truth_b);
    n += 2;
    out.runs.push_back(std::move(pr));
  }
  if (n > 0) {
    out.tabular_mae = tab_err / static_cast<double>(n);
    out.fusion_mae = fus_err / static_cast<double>(n);
  }
  return out;
}

namespace {

double quantile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

ErrorDensity error_density(const std::string& label, std::span<const double> errors, double bin_width) {
  if (!(bin_width > 0.0)) throw std::invalid_argument("error_density: bin width must be positive");
  ErrorDensity d;
  d.label = label;
  d.bin_width = bin_width;
  if (errors.empty()) return d;
  const std::vector<double> e(errors.begin(), errors.end());
  d.mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
  double ss = 0.0;
  for (double v : e) ss += (v - d.mean) * (v - d.mean);
  d.sd = std::sqrt(ss / static_cast<double>(e.size()));
  d.central90_width = quantile(e, 0.95) - quantile(e, 0.05);

  auto bin_of = [&](double v) { return static_cast<long>(std::llround(v / bin_width)); };
  long lo = bin_of(e.front()), hi = lo;
  for (double v : e) {
    lo = std::min(lo, bin_of(v));
    hi = std::max(hi, bin_of(v));
  }
  d.counts.assign(static_cast<std::size_t>(hi - lo + 1), 0);
  for (double v : e) ++d.counts[static_cast<std::size_t>(bin_of(v) - lo)];
  for (long k = lo; k <= hi; ++k) {
    d.bin_centers.push_back(static_cast<double>(k) * bin_width);
    d.density.push_back(static_cast<double>(d.counts[static_cast<std::size_t>(k - lo)]) /
                        (static_cast<double>(e.size()) * bin_width));
  }
  return d;
}

ErrorDensity error_density(const ArmResult& arm, double bin_width) {
  std::vector<double> e;
  for (const auto& p : arm.predictions) e.push_back(p.prediction - p.truth);
  return error_density(arm.name, e, bin_width);
}

}  // namespace dryfuse
