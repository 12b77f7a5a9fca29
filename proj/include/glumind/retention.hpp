#pragma once

#include "glumind/autodiff.hpp"
#include "glumind/model.hpp"
#include "glumind/rng.hpp"
#include "glumind/signals.hpp"

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace glumind {

struct RetentionMethod {
  enum class Kind { None, LwF, EWC, ER };

  Kind kind = Kind::None;
  double lambda = 1.0;        ///< LwF distillation weight
  double lambda_ewc = 100.0;  ///< EWC penalty weight
  int fisher_samples = 32;    ///< batches used for the diagonal Fisher
  std::size_t buffer_cap = 512;
  double replay_ratio = 0.25;

  static RetentionMethod none() { return {}; }
  static RetentionMethod lwf(double lambda = 1.0) { return {Kind::LwF, lambda}; }
  static RetentionMethod ewc(double lambda_ewc = 100.0, int fisher_samples = 32) {
    RetentionMethod r;
    r.kind = Kind::EWC;
    r.lambda_ewc = lambda_ewc;
    r.fisher_samples = fisher_samples;
    return r;
  }
  static RetentionMethod er(std::size_t buffer_cap = 512, double replay_ratio = 0.25) {
    RetentionMethod r;
    r.kind = Kind::ER;
    r.buffer_cap = buffer_cap;
    r.replay_ratio = replay_ratio;
    return r;
  }

  void validate() const;
  [[nodiscard]] std::string label() const;
  [[nodiscard]] bool operator==(const RetentionMethod&) const = default;
};

std::string_view retention_kind_name(RetentionMethod::Kind k);
std::optional<RetentionMethod::Kind> parse_retention_kind(std::string_view name);

/// Frozen copy of the parameters at a cohort boundary; inference only.
class SnapshotModel {
 public:
  explicit SnapshotModel(const GluMindModel& model) : model_(std::make_shared<const GluMindModel>(model)) {}

  [[nodiscard]] const GluMindModel& model() const { return *model_; }
  [[nodiscard]] std::vector<std::vector<double>> predict(std::span<const WindowSample> batch) const {
    return model_->predict(batch);
  }

 private:
  std::shared_ptr<const GluMindModel> model_;
};

/// Mean squared error of the model over a batch (normalized units).
Var prediction_loss(const GluMindModel& model, const ParamBinding& b, std::span<const WindowSample> batch);

struct LwfLoss {
  Var total;
  Var pred;
  Var distill;
};

/// L_pred(f(x), y) + lambda * MSE(f(x), f_snapshot(x)); the snapshot runs
/// without gradient recording.
LwfLoss lwf_total_loss(const GluMindModel& model, const ParamBinding& b, const SnapshotModel& snapshot,
                       std::span<const WindowSample> batch, double lambda);

/// Anchor parameters and diagonal Fisher information.
struct EwcState {
  ParamStore anchor;
  std::map<std::string, Matrix, std::less<>> fisher;
};

/// (lambda / 2) * sum_j F_j (theta_j - anchor_j)^2 recorded on the tape.
Var ewc_penalty(const ParamBinding& b, const EwcState* state, double lambda_ewc);
/// Same quantity evaluated directly on a parameter store.
double ewc_penalty_value(const ParamStore& params, const EwcState* state, double lambda_ewc);

/// Mean squared gradient of the prediction loss over up to `batches` chronological batches.
std::map<std::string, Matrix, std::less<>> estimate_fisher(const GluMindModel& model,
                                                           std::span<const WindowSample> windows,
                                                           std::size_t batch_size, int batches);

/// Reservoir-sampled store of past windows.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void offer(const WindowSample& sample, Rng& rng);
  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] std::size_t seen() const { return seen_; }
  [[nodiscard]] bool empty() const { return items_.empty(); }
  [[nodiscard]] const std::vector<WindowSample>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::size_t seen_ = 0;
  std::vector<WindowSample> items_;
};

/// ceil(ratio * batch_size) samples drawn uniformly (with replacement) from
/// the buffer, the remainder from the front of `current`. An empty buffer
/// returns `current` unchanged.
std::vector<WindowSample> er_mix_batch(std::span<const WindowSample> current, const ReplayBuffer& buffer,
                                       double replay_ratio, std::size_t batch_size, Rng& rng);
/// Number of replayed samples in a batch of `batch_size`.
std::size_t replay_count(double replay_ratio, std::size_t batch_size);

struct ForgettingMetrics {
  double fr = 1.0;   ///< final / initial
  double af = 0.0;   ///< final - initial (mg/dL)
  double bwt = 0.0;  ///< (final - initial) / initial * 100
};

ForgettingMetrics forgetting_metrics(double rmse_initial, double rmse_final);

struct ForgettingRow {
  Cohort cohort = Cohort::Healthy;
  double rmse_initial = 0.0;
  double rmse_final = 0.0;
  double fr = 1.0;
  double af = 0.0;
  double bwt = 0.0;
};

/// Per-cohort forgetting plus the averages under three aggregations.
///
/// Averages cover cohorts that were followed by further training; with a
/// single cohort they cover that cohort.
struct ForgettingReport {
  std::vector<ForgettingRow> rows;
  ForgettingMetrics avg_over_cohorts;
  ForgettingMetrics avg_over_subjects;
  ForgettingMetrics avg_over_runs;
};

ForgettingMetrics mean_metrics(std::span<const ForgettingMetrics> items);

/// Per-run, per-cohort bookkeeping owned by the single training worker.
class RetentionContext {
 public:
  RetentionContext(RetentionMethod method, std::uint64_t seed);

  [[nodiscard]] const RetentionMethod& method() const { return method_; }
  [[nodiscard]] const std::optional<SnapshotModel>& snapshot() const { return snapshot_; }
  [[nodiscard]] const std::optional<EwcState>& ewc() const { return ewc_; }
  [[nodiscard]] const ReplayBuffer& buffer() const { return buffer_; }

  /// Current-cohort windows consumed per optimizer step.
  [[nodiscard]] std::size_t current_per_batch(std::size_t batch_size) const;
  /// Adds replayed windows when ER is active and the buffer has content.
  std::vector<WindowSample> assemble_batch(std::span<const WindowSample> current, std::size_t batch_size);
  /// Training loss for the configured method.
  Var loss(const GluMindModel& model, const ParamBinding& b, std::span<const WindowSample> batch) const;
  /// Cohort-boundary hook: snapshot (LwF), Fisher + anchor (EWC), buffer ingest (ER).
  void end_cohort(const GluMindModel& model, std::span<const WindowSample> cohort_train, std::size_t batch_size);

 private:
  RetentionMethod method_;
  Rng rng_;
  std::optional<SnapshotModel> snapshot_;
  std::optional<EwcState> ewc_;
  ReplayBuffer buffer_;
};

}  // namespace glumind
