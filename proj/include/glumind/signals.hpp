#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace glumind {

enum class Modality { Glucose, WalkSteps, WalkInterval, RunSteps, RunInterval, Stress, HeartRate };

inline constexpr Modality kAllModalities[] = {Modality::Glucose,     Modality::WalkSteps, Modality::WalkInterval,
                                              Modality::RunSteps,    Modality::RunInterval, Modality::Stress,
                                              Modality::HeartRate};

std::string_view modality_name(Modality m);
std::optional<Modality> parse_modality(std::string_view name);
/// Native sampling period used by the generator (minutes).
double native_period(Modality m);
std::string_view default_units(Modality m);

enum class Cohort { Healthy, PreT2DM, Oral, Insulin };

inline constexpr Cohort kAllCohorts[] = {Cohort::Healthy, Cohort::PreT2DM, Cohort::Oral, Cohort::Insulin};

std::string_view cohort_name(Cohort c);
std::optional<Cohort> parse_cohort(std::string_view name);

/// Feature groups as used by the feature-set experiments: BG is glucose,
/// W/R expand to steps+interval pairs.
enum class FeatureGroup { BG, W, R, Stress, HR };

class FeatureSet {
 public:
  FeatureSet() : groups_{FeatureGroup::BG} {}
  explicit FeatureSet(std::vector<FeatureGroup> groups);

  /// Parses "BG+W+Stress"; BG is mandatory.
  static FeatureSet parse(std::string_view text);
  static FeatureSet all();

  [[nodiscard]] std::string label() const;
  [[nodiscard]] const std::vector<FeatureGroup>& groups() const { return groups_; }
  /// Auxiliary modalities in canonical (enum) order; excludes glucose.
  [[nodiscard]] std::vector<Modality> aux_modalities() const;
  [[nodiscard]] bool operator==(const FeatureSet&) const = default;

 private:
  std::vector<FeatureGroup> groups_;
};

inline constexpr double kGlucosePeriod = 5.0;
inline constexpr double kGlucoseMin = 40.0;
inline constexpr double kGlucoseMax = 400.0;

inline constexpr double kGap = std::numeric_limits<double>::quiet_NaN();
inline bool is_gap(double v) { return std::isnan(v); }

struct SignalSeries {
  Modality modality = Modality::Glucose;
  double period_min = kGlucosePeriod;
  double t0_min = 0.0;
  std::vector<double> values;
  std::string units;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] double time_at(std::size_t i) const { return t0_min + static_cast<double>(i) * period_min; }
  /// One period past the last sample.
  [[nodiscard]] double end_time() const { return time_at(values.size()); }
  [[nodiscard]] bool has_gaps() const;
};

struct SubjectRecord {
  std::string subject_id;
  Cohort cohort = Cohort::Healthy;
  std::map<Modality, SignalSeries> series;

  [[nodiscard]] const SignalSeries& glucose() const;
  [[nodiscard]] bool has(Modality m) const { return series.contains(m); }
};

struct AuxWindow {
  double period_min = 1.0;
  std::vector<double> values;
};

struct WindowSample {
  std::size_t start = 0;    ///< index of the first history sample on the glucose grid
  double t_start_min = 0.0;  ///< wall-clock time of that sample
  std::vector<double> target_history;
  std::map<Modality, AuxWindow> aux_windows;
  std::vector<double> target_future;
};

/// Parameters of the synthetic cohort generator.
struct CohortSpec {
  double baseline_glucose = 100.0;
  double glucose_sd = 10.0;          ///< circadian swing amplitude (mg/dL)
  double meal_spike_amp = 40.0;      ///< mean meal peak (mg/dL)
  double activity_dip_coeff = 10.0;  ///< mg/dL drop per unit smoothed activity
  double stress_coupling = 5.0;      ///< mg/dL rise per 25 stress points above 25
  double noise_sd = 4.0;             ///< stationary sd of the AR(1) residual
  double meal_peak_min = 45.0;       ///< time from meal to glucose peak

  static CohortSpec preset(Cohort c);
  void validate() const;
};

std::uint64_t derive_subject_seed(std::uint64_t seed, std::string_view subject_id);

/// Deterministic synthetic subject: glucose (5 min), walking/running and
/// heart rate (1 min), stress (3 min); about 2% interior samples are gaps.
SubjectRecord generate_subject(const CohortSpec& spec, int days, std::uint64_t seed,
                               std::string subject_id = "subject", Cohort cohort = Cohort::Healthy);

/// Linear interpolation of interior gaps; leading/trailing gaps are trimmed.
SignalSeries interpolate_gaps(SignalSeries s);

struct Normalization {
  double mean = 0.0;
  double sd = 1.0;  ///< population sd; 0 for constant input

  [[nodiscard]] double scale() const { return sd == 0.0 ? 1.0 : sd; }
  [[nodiscard]] double apply(double x) const { return sd == 0.0 ? 0.0 : (x - mean) / sd; }
  [[nodiscard]] double invert(double z) const { return z * scale() + mean; }
};

Normalization fit_normalization(std::span<const double> values);

/// z-scores the series with statistics taken from its first `fit_count`
/// samples (all samples when fit_count is 0).
std::pair<SignalSeries, Normalization> normalize_z(const SignalSeries& s, std::size_t fit_count = 0);

/// Window-mean downsampling or linear-interpolation upsampling onto a grid of
/// `period_out_min` starting at the series' t0.
SignalSeries resample_to_grid(const SignalSeries& s, double period_out_min);

/// Gap interpolation for every series plus trimming to the common time span.
SubjectRecord preprocess_subject(const SubjectRecord& rec, std::span<const Modality> modalities);

struct WindowSpec {
  std::size_t history = 80;  ///< T, glucose samples
  std::size_t horizon = 6;   ///< m, glucose samples
  std::size_t stride = 1;
};

std::size_t window_count(std::size_t glucose_len, const WindowSpec& spec);
/// Aux window length for a modality sampled every `period_min`.
std::size_t aux_window_length(std::size_t history, double period_min);

std::vector<WindowSample> make_windows(const SubjectRecord& rec, const WindowSpec& spec, const FeatureSet& features);

struct Split {
  std::vector<WindowSample> train;
  std::vector<WindowSample> test;
};

/// Chronological split: the first ceil(ratio * N) windows train.
Split split_train_test(std::vector<WindowSample> samples, double ratio);
std::size_t train_count(std::size_t n, double ratio);

/// A subject ready for training: normalized windows plus the affine maps that
/// bring predictions back to mg/dL.
struct PreparedSubject {
  std::string subject_id;
  Cohort cohort = Cohort::Healthy;
  Split split;
  Normalization glucose_norm;
  std::map<Modality, Normalization> aux_norms;
};

PreparedSubject prepare_subject(const SubjectRecord& rec, const WindowSpec& spec, const FeatureSet& features,
                                double train_ratio);

// ---- files ---------------------------------------------------------------

/// Writes `time_min,modality,value`, rows sorted by (modality, time); gaps are empty cells.
void write_csv(const std::filesystem::path& path, const SubjectRecord& rec);
/// Subject id is the file stem.
SubjectRecord load_csv(const std::filesystem::path& path, Cohort cohort = Cohort::Healthy);

struct ManifestEntry {
  std::string subject_id;
  Cohort cohort = Cohort::Healthy;
  std::string file;
  std::uint64_t seed = 0;
  CohortSpec spec;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  int days = 1;
  std::vector<ManifestEntry> subjects;
};

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace glumind
