#pragma once

#include "glumind/model.hpp"
#include "glumind/retention.hpp"
#include "glumind/signals.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace glumind {

/// Everything needed to reproduce one sequential fine-tuning experiment.
struct ExperimentPlan {
  std::vector<Cohort> cohort_order{Cohort::Healthy, Cohort::PreT2DM, Cohort::Oral, Cohort::Insulin};
  int subjects_per_cohort = 8;
  int days = 10;
  WindowSpec window{80, 6, 1};
  FeatureSet features = FeatureSet::parse("BG+W+Stress+HR");
  RetentionMethod retention = RetentionMethod::lwf(1.0);
  int epochs = 500;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int runs = 5;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
  double train_ratio = 0.8;
  double grad_clip = 1.0;  ///< global gradient-norm bound per step; 0 disables

  Index d_model = 64;
  Index heads = 4;
  Index ff_hidden = 128;
  Variant variant = Variant::Full;
  int layers = 1;

  /// Load subjects from a gen-data directory instead of generating them.
  std::optional<std::string> data_dir;
  /// Generator overrides per cohort (presets otherwise).
  std::map<Cohort, CohortSpec> cohort_specs;
  /// History lengths (glucose samples) swept by the history ablation.
  std::vector<std::size_t> history_grid{16, 32, 48, 64};

  void validate() const;
  [[nodiscard]] CohortSpec spec_for(Cohort c) const;
};

nlohmann::ordered_json plan_to_json(const ExperimentPlan& plan);
/// Strict: unknown keys raise ConfigError.
ExperimentPlan plan_from_json(const nlohmann::json& j);
ExperimentPlan load_plan(const std::filesystem::path& path);

ModelConfig model_config_for(const ExperimentPlan& plan, int run);
nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct MetricsRow {
  int run = 0;
  Cohort cohort = Cohort::Healthy;
  std::string subject;
  int horizon_min = 0;
  double rmse = 0.0;  ///< mg/dL
  double mae = 0.0;   ///< mg/dL
  std::optional<double> pearson_r;  ///< empty when undefined (constant input)
};

struct Evaluation {
  MetricsRow final_step;  ///< pairs at the evaluated forecast step
  MetricsRow all_steps;   ///< pairs pooled over steps 1..step
  double sse = 0.0;       ///< final-step sums for window-level pooling
  double sae = 0.0;
  std::size_t count = 0;
};

/// Test-split metrics in mg/dL. `step` is 1-based; 0 selects the last step.
Evaluation evaluate_subject(const GluMindModel& model, const PreparedSubject& subject, int run, Index step = 0);

struct SubjectResult {
  Evaluation evaluation;
  std::vector<double> epoch_losses;  ///< mean batch loss per epoch
};

/// Trains on the subject's train split, then evaluates its test split.
SubjectResult train_subject(GluMindModel& model, const PreparedSubject& subject, const ExperimentPlan& plan,
                            RetentionContext& retention, int run);

/// Subjects grouped in plan.cohort_order.
struct CohortData {
  Cohort cohort = Cohort::Healthy;
  std::vector<SubjectRecord> subjects;
};

std::vector<CohortData> load_or_generate(const ExperimentPlan& plan);

/// Cohort-level test metrics of one run. "initial" is measured when the
/// cohort's training pass ends, "final" after the whole sequence.
struct CohortSummaryRow {
  int run = 0;
  Cohort cohort = Cohort::Healthy;
  double rmse_subject_macro = 0.0;
  double rmse_window_micro = 0.0;
  double mae_subject_macro = 0.0;
  double mae_window_micro = 0.0;
  double rmse_final_subject_macro = 0.0;
  ForgettingMetrics forgetting;  ///< from the subject-macro RMSEs
};

struct SequenceResult {
  std::vector<MetricsRow> rows;            ///< final-step, one per (run, subject)
  std::vector<MetricsRow> rows_all_steps;  ///< all-steps pooled counterpart
  std::vector<CohortSummaryRow> cohort_summary;
  ForgettingReport report;
  /// Window start indices used for training / testing, per subject id.
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> window_usage;
  std::vector<std::vector<double>> epoch_losses;  ///< one entry per trained subject, in order
};

struct SequenceOptions {
  /// Writes cohort-boundary checkpoints (+ JSON sidecars) when set.
  std::optional<std::filesystem::path> checkpoint_dir;
};

/// One model threads through all subjects of all cohorts, per run.
SequenceResult run_sequence(const ExperimentPlan& plan, const SequenceOptions& options = {});
SequenceResult run_sequence(const ExperimentPlan& plan, const std::vector<CohortData>& data,
                            const SequenceOptions& options = {});

enum class AblationKind { FeatureSets, AttentionVariants, Horizons, Histories, RetentionMethods };

std::string_view ablation_kind_name(AblationKind k);
std::optional<AblationKind> parse_ablation_kind(std::string_view name);

struct AblationConfig {
  std::string label;
  ExperimentPlan plan;
};

/// The experiment matrix for one ablation; everything but the swept field is
/// copied from `base`.
std::vector<AblationConfig> ablation_grid(AblationKind kind, const ExperimentPlan& base);

struct AblationRow {
  std::string kind;
  std::string config;
  Cohort cohort = Cohort::Healthy;
  int runs = 0;
  double rmse_mean = 0.0, rmse_sd = 0.0;
  double mae_mean = 0.0, mae_sd = 0.0;
  double fr_mean = 0.0, fr_sd = 0.0;
};

std::vector<AblationRow> run_ablation(AblationKind kind, const ExperimentPlan& base);

// ---- output ---------------------------------------------------------------

/// Fixed 4-decimal rendering used by every CSV.
std::string format4(double v);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);
void write_forgetting_csv(const std::filesystem::path& path, const ForgettingReport& report);
void write_cohort_summary_csv(const std::filesystem::path& path, const std::vector<CohortSummaryRow>& rows);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

nlohmann::ordered_json metrics_row_to_json(const MetricsRow& row);
nlohmann::ordered_json forgetting_to_json(const ForgettingReport& report);

enum class OutputFormat { CSV, JSON };

/// Writes rows (and the report, when given) in the chosen format. JSON files
/// carry the plan echo.
void emit_metrics(const std::vector<MetricsRow>& rows, const ForgettingReport* report,
                  const std::filesystem::path& path, OutputFormat format, const ExperimentPlan* plan = nullptr);

/// Writes metrics, forgetting report, cohort summary and plan echo into `dir`.
void write_sequence_outputs(const std::filesystem::path& dir, const ExperimentPlan& plan, const SequenceResult& result);

}  // namespace glumind
