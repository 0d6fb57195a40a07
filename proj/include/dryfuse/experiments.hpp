#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dryfuse/baselines.hpp"
#include "dryfuse/dataset.hpp"
#include "dryfuse/models.hpp"
#include "dryfuse/training.hpp"

namespace dryfuse {

// One (temperature, velocity) combination held out for evaluation.
struct FoldSplit {
  double temperature = 0.0;
  double air_velocity = 0.0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;

  std::string label() const;  // e.g. "60C/1.5"
};

class UnevaluableFold : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// One fold per condition combination, ordered by (T, v). Strict mode requires
// the full 3x2 grid.
std::vector<FoldSplit> make_folds(const std::vector<DryingRecord>& records, bool strict = false);

double rmse(std::span<const double> predictions, std::span<const double> truths);

enum class Arm {
  tabular,              // FC 3 -> hidden -> 1 (also the tabular-only NN baseline)
  image_only,           // CNN encoder + scalar head
  simplified_parallel,  // tabular + (luminance, area) parallel branches
  fusion,               // tabular MLP + CNN encoder + ratio head
  ols_tabular,
  gp_tabular,
  ols_standard,
  gp_standard,
  nn_standard,
};

const char* to_string(Arm arm);
Arm parse_arm(const std::string& name);

inline constexpr Arm kAblationArms[] = {Arm::tabular, Arm::image_only, Arm::simplified_parallel,
                                        Arm::fusion};
inline constexpr Arm kBaselineArms[] = {Arm::ols_tabular,  Arm::gp_tabular,  Arm::tabular,
                                        Arm::ols_standard, Arm::gp_standard, Arm::nn_standard,
                                        Arm::fusion};

struct ExperimentSettings {
  FusionConfig fusion;
  TrainingConfig training;
  int nn_hidden = 1024;
  RgbMode rgb_mode = RgbMode::luminance;
  GpParams gp;
  std::uint64_t seed = 42;
  int jobs = 1;
};

// Model seed for one fold: depends only on (seed, fold index).
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

struct RecordPrediction {
  std::string sample_id;
  std::string run_id;
  std::size_t fold = 0;
  double prediction = 0.0;
  double truth = 0.0;
};

struct ArmResult {
  std::string name;  // arm name, or "fusion@<ratio>" for sweep entries
  std::vector<RecordPrediction> predictions;
  std::vector<double> fold_rmse;
  double average_rmse = 0.0;
  std::vector<std::vector<double>> loss_history;  // per fold; empty for closed-form fits
};

// Fold RMSEs and their mean recomputed from per-record predictions.
void summarize(ArmResult& result, std::size_t fold_count);

ArmResult cross_validate(const PreparedDataset& data, const std::vector<FoldSplit>& folds, Arm arm,
                         const ExperimentSettings& settings);

DesignMode design_mode(Arm arm);
bool uses_images(Arm arm);

// A fitted arm: fold-local standardization plus whichever model the arm uses.
struct TrainedArm {
  Arm arm = Arm::tabular;
  ExperimentSettings settings;
  std::uint64_t seed = 0;
  Standardizer standardizer;  // empty for image_only
  std::unique_ptr<Regressor> network;
  OlsModel ols;
  GpModel gp;
  TrainingHistory history;
};

// Builds the (unstandardized) model input rows for an arm.
Matrix arm_design(const PreparedDataset& data, Arm arm, RgbMode rgb);
// Creates an untrained network for a network arm (nullptr for OLS/GP).
std::unique_ptr<Regressor> make_network(Arm arm, const ExperimentSettings& settings, std::uint64_t seed);

TrainedArm train_arm(const PreparedDataset& data, const std::vector<std::size_t>& rows, Arm arm,
                     const ExperimentSettings& settings, std::uint64_t seed);
std::vector<double> predict_arm(const TrainedArm& model, const PreparedDataset& data,
                                const std::vector<std::size_t>& rows);

// train_arm on `train` followed by predict_arm on `eval`.
std::vector<double> fit_predict(const PreparedDataset& data, const std::vector<std::size_t>& train,
                                const std::vector<std::size_t>& eval, Arm arm,
                                const ExperimentSettings& settings, std::uint64_t seed,
                                std::vector<double>* loss_history = nullptr);

// ---------------------------------------------------------------------------
// Tables (derived from ArmResults, never computed separately)

struct TableRow {
  std::string group;  // dataset column of the baseline table; empty otherwise
  std::string label;
  double average_rmse = 0.0;
  std::optional<double> reduction_percent;  // relative to full fusion
};

double reduction_percent(double other_rmse, double fusion_rmse);

const ArmResult& find_arm(const std::vector<ArmResult>& arms, const std::string& name);
std::vector<TableRow> ablation_table(const std::vector<ArmResult>& arms);
std::vector<TableRow> baseline_table(const std::vector<ArmResult>& arms);

struct SweepRow {
  Ratio ratio;
  double average_rmse = 0.0;
  std::vector<double> fold_rmse;
};

std::string sweep_arm_name(Ratio ratio);
std::vector<ArmResult> ratio_sweep(const PreparedDataset& data, const std::vector<FoldSplit>& folds,
                                   const std::vector<Ratio>& ratios, const ExperimentSettings& settings);
std::vector<SweepRow> sweep_table(const std::vector<ArmResult>& arms, const std::vector<Ratio>& ratios);

// ---------------------------------------------------------------------------
// Analyses

struct PairedRun {
  std::string run_id;
  std::string sample_a, sample_b;
  double truth_a = 0.0, truth_b = 0.0;
  double tabular_a = 0.0, tabular_b = 0.0;
  double fusion_a = 0.0, fusion_b = 0.0;
};

struct PairedSliceReport {
  std::vector<PairedRun> runs;
  bool tabular_identical = true;  // tabular predictions bitwise equal in every run
  double tabular_mae = 0.0;
  double fusion_mae = 0.0;
};

PairedSliceReport paired_slice_analysis(const std::vector<DryingRecord>& records,
                                        const ArmResult& tabular, const ArmResult& fusion);

struct ErrorDensity {
  std::string label;
  double bin_width = 0.0;
  std::vector<double> bin_centers;
  std::vector<double> density;  // integrates to 1 over the bins
  std::vector<std::size_t> counts;
  double mean = 0.0;
  double sd = 0.0;            // population
  double central90_width = 0.0;  // q95 - q05
};

// Errors are prediction - truth, binned on a grid centred at zero.
ErrorDensity error_density(const std::string& label, std::span<const double> errors,
                           double bin_width = 0.01);
ErrorDensity error_density(const ArmResult& arm, double bin_width = 0.01);

}  // namespace dryfuse
