#include "glumind/signals.hpp"

#include "glumind/errors.hpp"
#include "glumind/rng.hpp"

#include <algorithm>
#include <array>
#include <numbers>
#include <numeric>

namespace glumind {

namespace {

constexpr std::array<std::string_view, 7> kModalityNames = {"glucose", "walk_steps", "walk_interval", "run_steps",
                                                            "run_interval", "stress", "heart_rate"};
constexpr std::array<std::string_view, 4> kCohortNames = {"Healthy", "PreT2DM", "Oral", "Insulin"};
constexpr std::array<std::string_view, 5> kGroupNames = {"BG", "W", "R", "Stress", "HR"};

constexpr double kMinutesPerDay = 1440.0;
constexpr double kTimeEps = 1e-9;

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

std::string_view modality_name(Modality m) { return kModalityNames[static_cast<std::size_t>(m)]; }

std::optional<Modality> parse_modality(std::string_view name) {
  for (std::size_t i = 0; i < kModalityNames.size(); ++i) {
    if (kModalityNames[i] == name) return static_cast<Modality>(i);
  }
  return std::nullopt;
}

double native_period(Modality m) {
  switch (m) {
    case Modality::Glucose:
      return kGlucosePeriod;
    case Modality::Stress:
      return 3.0;
    default:
      return 1.0;
  }
}

std::string_view default_units(Modality m) {
  switch (m) {
    case Modality::Glucose:
      return "mg/dL";
    case Modality::WalkSteps:
    case Modality::RunSteps:
      return "steps/min";
    case Modality::WalkInterval:
    case Modality::RunInterval:
      return "active fraction";
    case Modality::Stress:
      return "index 0-100";
    case Modality::HeartRate:
      return "bpm";
  }
  return "";
}

std::string_view cohort_name(Cohort c) { return kCohortNames[static_cast<std::size_t>(c)]; }

std::optional<Cohort> parse_cohort(std::string_view name) {
  for (std::size_t i = 0; i < kCohortNames.size(); ++i) {
    if (kCohortNames[i] == name) return static_cast<Cohort>(i);
  }
  return std::nullopt;
}

// ---- FeatureSet -------------------------------------------------------------

FeatureSet::FeatureSet(std::vector<FeatureGroup> groups) : groups_(std::move(groups)) {
  std::sort(groups_.begin(), groups_.end());
  groups_.erase(std::unique(groups_.begin(), groups_.end()), groups_.end());
  if (groups_.empty() || groups_.front() != FeatureGroup::BG) {
    throw ConfigError("feature set must contain BG");
  }
}

FeatureSet FeatureSet::parse(std::string_view text) {
  std::vector<FeatureGroup> groups;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t plus = text.find('+', pos);
    const std::string_view token = text.substr(pos, plus == std::string_view::npos ? text.size() - pos : plus - pos);
    bool found = false;
    for (std::size_t i = 0; i < kGroupNames.size(); ++i) {
      if (kGroupNames[i] == token) {
        groups.push_back(static_cast<FeatureGroup>(i));
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown feature group '" + std::string(token) + "' (accepted: BG, W, R, Stress, HR)");
    if (plus == std::string_view::npos) break;
    pos = plus + 1;
  }
  return FeatureSet(std::move(groups));
}

FeatureSet FeatureSet::all() {
  return FeatureSet({FeatureGroup::BG, FeatureGroup::W, FeatureGroup::R, FeatureGroup::Stress, FeatureGroup::HR});
}

std::string FeatureSet::label() const {
  std::string out;
  for (FeatureGroup g : groups_) {
    if (!out.empty()) out += '+';
    out += kGroupNames[static_cast<std::size_t>(g)];
  }
  return out;
}

std::vector<Modality> FeatureSet::aux_modalities() const {
  std::vector<Modality> out;
  for (FeatureGroup g : groups_) {
    switch (g) {
      case FeatureGroup::BG:
        break;
      case FeatureGroup::W:
        out.push_back(Modality::WalkSteps);
        out.push_back(Modality::WalkInterval);
        break;
      case FeatureGroup::R:
        out.push_back(Modality::RunSteps);
        out.push_back(Modality::RunInterval);
        break;
      case FeatureGroup::Stress:
        out.push_back(Modality::Stress);
        break;
      case FeatureGroup::HR:
        out.push_back(Modality::HeartRate);
        break;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- series basics ----------------------------------------------------------

bool SignalSeries::has_gaps() const { return std::any_of(values.begin(), values.end(), is_gap); }

const SignalSeries& SubjectRecord::glucose() const {
  auto it = series.find(Modality::Glucose);
  if (it == series.end()) throw DataError("subject " + subject_id + " has no glucose series");
  return it->second;
}

// ---- generator --------------------------------------------------------------

CohortSpec CohortSpec::preset(Cohort c) {
  switch (c) {
    case Cohort::Healthy:
      return {95.0, 8.0, 35.0, 10.0, 4.0, 3.0, 40.0};
    case Cohort::PreT2DM:
      return {110.0, 12.0, 50.0, 12.0, 6.0, 4.0, 45.0};
    case Cohort::Oral:
      return {145.0, 18.0, 70.0, 15.0, 8.0, 6.0, 55.0};
    case Cohort::Insulin:
      return {170.0, 28.0, 90.0, 18.0, 10.0, 9.0, 60.0};
  }
  return {};
}

void CohortSpec::validate() const {
  if (baseline_glucose < 70.0 || baseline_glucose > 220.0) {
    throw ConfigError("cohort baseline_glucose must lie in [70, 220]");
  }
  if (glucose_sd < 0 || meal_spike_amp < 0 || activity_dip_coeff < 0 || stress_coupling < 0 || noise_sd < 0) {
    throw ConfigError("cohort amplitudes must be non-negative");
  }
  if (meal_peak_min <= 0) throw ConfigError("meal_peak_min must be positive");
}

std::uint64_t derive_subject_seed(std::uint64_t seed, std::string_view subject_id) {
  return seed ^ stable_hash(subject_id);
}

SubjectRecord generate_subject(const CohortSpec& spec, int days, std::uint64_t seed, std::string subject_id,
                               Cohort cohort) {
  if (days < 1) throw ConfigError("generate_subject needs days >= 1");
  spec.validate();
  Rng rng(seed);
  const auto minutes = static_cast<std::size_t>(days) * static_cast<std::size_t>(kMinutesPerDay);

  // Minute-resolution latent signals.
  std::vector<double> walk_steps(minutes, 0.0), walk_frac(minutes, 0.0);
  std::vector<double> run_steps(minutes, 0.0), run_frac(minutes, 0.0);
  std::vector<double> stress(minutes, 0.0), heart(minutes, 0.0);
  std::vector<double> meal_times;
  std::vector<double> meal_sizes;

  for (int d = 0; d < days; ++d) {
    const double day0 = d * kMinutesPerDay;
    const int bouts = 2 + static_cast<int>(rng.below(4));
    for (int b = 0; b < bouts; ++b) {
      const double start = day0 + rng.uniform(7.0 * 60, 21.0 * 60);
      const double len = rng.uniform(10.0, 45.0);
      const double cadence = rng.uniform(85.0, 120.0);
      for (auto t = static_cast<std::size_t>(start); t < std::min<std::size_t>(minutes, static_cast<std::size_t>(start + len)); ++t) {
        walk_frac[t] = 1.0;
        walk_steps[t] = std::max(0.0, cadence + 8.0 * rng.normal());
      }
    }
    if (rng.uniform() < 0.5) {
      const double start = day0 + rng.uniform(6.0 * 60, 19.0 * 60);
      const double len = rng.uniform(10.0, 30.0);
      const double cadence = rng.uniform(150.0, 175.0);
      for (auto t = static_cast<std::size_t>(start); t < std::min<std::size_t>(minutes, static_cast<std::size_t>(start + len)); ++t) {
        run_frac[t] = 1.0;
        run_steps[t] = std::max(0.0, cadence + 6.0 * rng.normal());
        walk_frac[t] = 0.0;
        walk_steps[t] = 0.0;
      }
    }
    for (double meal_clock : {7.5 * 60, 12.5 * 60, 19.0 * 60}) {
      meal_times.push_back(day0 + meal_clock + rng.uniform(-30.0, 30.0));
      meal_sizes.push_back(spec.meal_spike_amp * rng.uniform(0.6, 1.4));
    }
  }

  // Stress: daytime bump plus an Ornstein-Uhlenbeck wander, raised by exertion.
  double ou = 0.0;
  for (std::size_t t = 0; t < minutes; ++t) {
    const double clock = std::fmod(static_cast<double>(t), kMinutesPerDay);
    const double daytime = std::max(0.0, std::sin(std::numbers::pi * (clock - 6.0 * 60) / (16.0 * 60)));
    ou = 0.98 * ou + 0.2 * 8.0 * rng.normal();
    stress[t] = clamp(20.0 + 20.0 * daytime + ou + 15.0 * run_frac[t], 0.0, 100.0);
  }
  for (std::size_t t = 0; t < minutes; ++t) {
    heart[t] = clamp(62.0 + 0.25 * walk_steps[t] + 0.45 * run_steps[t] + 0.15 * stress[t] + 2.0 * rng.normal(), 40.0, 200.0);
  }

  // Glucose on the 5-minute grid.
  const std::size_t n_glucose = minutes / 5;
  std::vector<double> glucose(n_glucose);
  double activity = 0.0;
  double stress_smooth = 25.0;
  double ar = 0.0;
  constexpr double kArPhi = 0.95;
  const double innovation_sd = spec.noise_sd * std::sqrt(1.0 - kArPhi * kArPhi);
  std::size_t minute = 0;
  for (std::size_t k = 0; k < n_glucose; ++k) {
    const double t = 5.0 * static_cast<double>(k);
    for (; minute <= static_cast<std::size_t>(t) && minute < minutes; ++minute) {
      const double intensity = walk_steps[minute] / 100.0 + 1.5 * run_steps[minute] / 100.0;
      activity += (intensity - activity) / 30.0;
      stress_smooth += (stress[minute] - stress_smooth) / 45.0;
    }
    const double clock = std::fmod(t, kMinutesPerDay);
    double g = spec.baseline_glucose + spec.glucose_sd * std::sin(2.0 * std::numbers::pi * (clock - 4.0 * 60) / kMinutesPerDay);
    for (std::size_t i = 0; i < meal_times.size(); ++i) {
      const double tau = t - meal_times[i];
      if (tau <= 0.0 || tau > 8.0 * 60) continue;
      const double x = tau / spec.meal_peak_min;
      g += meal_sizes[i] * x * std::exp(1.0 - x);
    }
    g -= spec.activity_dip_coeff * activity;
    g += spec.stress_coupling * (stress_smooth - 25.0) / 25.0;
    ar = kArPhi * ar + innovation_sd * rng.normal();
    g += ar;
    glucose[k] = clamp(g, kGlucoseMin, kGlucoseMax);
  }

  auto make = [](Modality m, std::vector<double> values) {
    SignalSeries s;
    s.modality = m;
    s.period_min = native_period(m);
    s.t0_min = 0.0;
    s.values = std::move(values);
    s.units = std::string(default_units(m));
    return s;
  };
  auto every = [](const std::vector<double>& v, std::size_t step) {
    std::vector<double> out;
    out.reserve(v.size() / step + 1);
    for (std::size_t i = 0; i < v.size(); i += step) out.push_back(v[i]);
    return out;
  };

  SubjectRecord rec;
  rec.subject_id = std::move(subject_id);
  rec.cohort = cohort;
  rec.series.emplace(Modality::Glucose, make(Modality::Glucose, std::move(glucose)));
  rec.series.emplace(Modality::WalkSteps, make(Modality::WalkSteps, std::move(walk_steps)));
  rec.series.emplace(Modality::WalkInterval, make(Modality::WalkInterval, std::move(walk_frac)));
  rec.series.emplace(Modality::RunSteps, make(Modality::RunSteps, std::move(run_steps)));
  rec.series.emplace(Modality::RunInterval, make(Modality::RunInterval, std::move(run_frac)));
  rec.series.emplace(Modality::Stress, make(Modality::Stress, every(stress, 3)));
  rec.series.emplace(Modality::HeartRate, make(Modality::HeartRate, std::move(heart)));

  // Sparse interior gaps, never at the endpoints.
  for (auto& [_, s] : rec.series) {
    for (std::size_t i = 1; i + 1 < s.values.size(); ++i) {
      if (rng.uniform() < 0.02) s.values[i] = kGap;
    }
  }
  return rec;
}

// ---- preprocessing ------------------------------------------------------------

SignalSeries interpolate_gaps(SignalSeries s) {
  auto first = std::find_if_not(s.values.begin(), s.values.end(), is_gap);
  if (first == s.values.end()) {
    throw DataError("series '" + std::string(modality_name(s.modality)) + "' is empty or all gaps");
  }
  auto last = std::find_if_not(s.values.rbegin(), s.values.rend(), is_gap).base();
  const auto lead = static_cast<std::size_t>(first - s.values.begin());
  s.values = std::vector<double>(first, last);
  s.t0_min += static_cast<double>(lead) * s.period_min;

  std::size_t prev = 0;
  for (std::size_t i = 1; i < s.values.size(); ++i) {
    if (is_gap(s.values[i])) continue;
    if (i - prev > 1) {
      const double a = s.values[prev];
      const double b = s.values[i];
      const auto span = static_cast<double>(i - prev);
      for (std::size_t j = prev + 1; j < i; ++j) {
        s.values[j] = a + (b - a) * static_cast<double>(j - prev) / span;
      }
    }
    prev = i;
  }
  return s;
}

Normalization fit_normalization(std::span<const double> values) {
  if (values.empty()) throw DataError("cannot normalize an empty series");
  const auto n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

std::pair<SignalSeries, Normalization> normalize_z(const SignalSeries& s, std::size_t fit_count) {
  if (s.values.empty()) throw DataError("cannot normalize an empty series");
  if (s.has_gaps()) throw DataError("normalize_z needs a gap-free series");
  const std::size_t n = fit_count == 0 ? s.values.size() : std::min(fit_count, s.values.size());
  const Normalization norm = fit_normalization(std::span<const double>(s.values.data(), n));
  SignalSeries out = s;
  for (double& v : out.values) v = norm.apply(v);
  return {std::move(out), norm};
}

SignalSeries resample_to_grid(const SignalSeries& s, double period_out_min) {
  if (!(period_out_min > 0.0)) throw ConfigError("resample period must be positive");
  if (s.has_gaps()) throw DataError("resample_to_grid needs a gap-free series");
  const std::size_t n = s.values.size();
  const double p_in = s.period_min;
  SignalSeries out = s;
  out.period_min = period_out_min;
  out.values.clear();

  if (std::abs(period_out_min - p_in) <= kTimeEps * std::max(1.0, p_in)) {
    out.values = s.values;
    out.period_min = p_in;
  } else if (period_out_min > p_in) {
    const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(n) * p_in / period_out_min));
    out.values.reserve(n_out);
    for (std::size_t k = 0; k < n_out; ++k) {
      const double lo = static_cast<double>(k) * period_out_min / p_in;
      const double hi = static_cast<double>(k + 1) * period_out_min / p_in;
      const auto i0 = static_cast<std::size_t>(std::max(0.0, std::ceil(lo - kTimeEps)));
      const auto i1 = std::min(n, static_cast<std::size_t>(std::max(0.0, std::ceil(hi - kTimeEps))));
      if (i1 > i0) {
        double acc = 0.0;
        for (std::size_t i = i0; i < i1; ++i) acc += s.values[i];
        out.values.push_back(acc / static_cast<double>(i1 - i0));
      } else {
        // No sample falls inside this interval: use the one just before it.
        out.values.push_back(s.values[std::min(n - 1, i0 == 0 ? 0 : i0 - 1)]);
      }
    }
  } else if (n > 0) {
    const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(n - 1) * p_in / period_out_min + kTimeEps)) + 1;
    out.values.reserve(n_out);
    for (std::size_t k = 0; k < n_out; ++k) {
      const double pos = static_cast<double>(k) * period_out_min / p_in;
      const auto lo = std::min(n - 1, static_cast<std::size_t>(std::floor(pos + kTimeEps)));
      const double frac = std::max(0.0, pos - static_cast<double>(lo));
      const double a = s.values[lo];
      const double b = lo + 1 < n ? s.values[lo + 1] : a;
      out.values.push_back(frac <= kTimeEps ? a : a + (b - a) * frac);
    }
  }
  if (out.values.empty()) {
    throw DataError("resample of '" + std::string(modality_name(s.modality)) + "' to period " +
                    std::to_string(period_out_min) + " min yields an empty series");
  }
  return out;
}

SubjectRecord preprocess_subject(const SubjectRecord& rec, std::span<const Modality> modalities) {
  SubjectRecord out;
  out.subject_id = rec.subject_id;
  out.cohort = rec.cohort;
  std::vector<Modality> wanted{Modality::Glucose};
  for (Modality m : modalities) {
    if (m != Modality::Glucose) wanted.push_back(m);
  }
  for (Modality m : wanted) {
    auto it = rec.series.find(m);
    if (it == rec.series.end()) {
      throw DataError("subject " + rec.subject_id + " lacks modality " + std::string(modality_name(m)));
    }
    out.series.emplace(m, interpolate_gaps(it->second));
  }
  double start = -std::numeric_limits<double>::infinity();
  double end = std::numeric_limits<double>::infinity();
  for (const auto& [_, s] : out.series) {
    start = std::max(start, s.t0_min);
    end = std::min(end, s.end_time());
  }
  if (!(end > start)) throw DataError("subject " + rec.subject_id + " series share no common time span");
  for (auto& [m, s] : out.series) {
    const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil((start - s.t0_min) / s.period_min - kTimeEps)));
    const auto stop = static_cast<std::size_t>(
        std::max(0.0, std::floor((end - s.t0_min) / s.period_min + kTimeEps)));
    if (stop <= first) throw DataError("subject " + rec.subject_id + ": " + std::string(modality_name(m)) + " empty after trimming");
    s.values = std::vector<double>(s.values.begin() + static_cast<std::ptrdiff_t>(first),
                                   s.values.begin() + static_cast<std::ptrdiff_t>(std::min(stop, s.values.size())));
    s.t0_min += static_cast<double>(first) * s.period_min;
  }
  return out;
}

// ---- windows ------------------------------------------------------------------

std::size_t window_count(std::size_t glucose_len, const WindowSpec& spec) {
  if (spec.stride < 1) throw ConfigError("window stride must be >= 1");
  const std::size_t need = spec.history + spec.horizon;
  if (glucose_len < need) return 0;
  return (glucose_len - need) / spec.stride + 1;
}

std::size_t aux_window_length(std::size_t history, double period_min) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(history) * kGlucosePeriod / period_min));
}

std::vector<WindowSample> make_windows(const SubjectRecord& rec, const WindowSpec& spec, const FeatureSet& features) {
  if (spec.history < 1 || spec.horizon < 1) throw ConfigError("window history and horizon must be >= 1");
  const SignalSeries& g = rec.glucose();
  const std::size_t need = spec.history + spec.horizon;
  if (g.size() < need) {
    throw DataError("subject " + rec.subject_id + ": insufficient data, windows need " + std::to_string(need) +
                    " glucose samples but only " + std::to_string(g.size()) + " are available");
  }
  const auto aux = features.aux_modalities();
  for (Modality m : aux) {
    if (!rec.has(m)) {
      throw DataError("subject " + rec.subject_id + " lacks modality " + std::string(modality_name(m)));
    }
  }
  const std::size_t count = window_count(g.size(), spec);
  std::vector<WindowSample> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    WindowSample sample;
    sample.start = w * spec.stride;
    sample.t_start_min = g.time_at(sample.start);
    const auto hist_begin = g.values.begin() + static_cast<std::ptrdiff_t>(sample.start);
    sample.target_history.assign(hist_begin, hist_begin + static_cast<std::ptrdiff_t>(spec.history));
    sample.target_future.assign(hist_begin + static_cast<std::ptrdiff_t>(spec.history),
                                hist_begin + static_cast<std::ptrdiff_t>(need));
    const double first_target_time = g.time_at(sample.start + spec.history);
    for (Modality m : aux) {
      const SignalSeries& s = rec.series.at(m);
      const std::size_t len = aux_window_length(spec.history, s.period_min);
      // Anchor on the last sample strictly before the first forecast target.
      const double pos = (first_target_time - s.t0_min) / s.period_min;
      const auto last = static_cast<std::ptrdiff_t>(std::ceil(pos - kTimeEps)) - 1;
      if (last >= static_cast<std::ptrdiff_t>(s.size()) || last < 0) {
        throw DataError("subject " + rec.subject_id + ": " + std::string(modality_name(m)) +
                        " does not cover the window at t=" + std::to_string(sample.t_start_min));
      }
      AuxWindow win;
      win.period_min = s.period_min;
      win.values.resize(len);
      for (std::size_t j = 0; j < len; ++j) {
        const std::ptrdiff_t idx = last - static_cast<std::ptrdiff_t>(len - 1 - j);
        win.values[j] = s.values[static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, idx))];
      }
      sample.aux_windows.emplace(m, std::move(win));
    }
    out.push_back(std::move(sample));
  }
  return out;
}

std::size_t train_count(std::size_t n, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("train ratio must lie in (0, 1)");
  // Guard against 0.8 * 10 landing a hair above 8.
  return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
}

Split split_train_test(std::vector<WindowSample> samples, double ratio) {
  const std::size_t n_train = train_count(samples.size(), ratio);
  if (n_train == 0 || n_train >= samples.size()) {
    throw DataError("split of " + std::to_string(samples.size()) + " windows at ratio " + std::to_string(ratio) +
                    " leaves one side empty");
  }
  Split split;
  split.test.assign(std::make_move_iterator(samples.begin() + static_cast<std::ptrdiff_t>(n_train)),
                    std::make_move_iterator(samples.end()));
  samples.resize(n_train);
  split.train = std::move(samples);
  return split;
}

PreparedSubject prepare_subject(const SubjectRecord& rec, const WindowSpec& spec, const FeatureSet& features,
                                double train_ratio) {
  const auto aux = features.aux_modalities();
  SubjectRecord clean = preprocess_subject(rec, aux);
  const SignalSeries& g = clean.glucose();
  const std::size_t n_windows = window_count(g.size(), spec);
  if (n_windows == 0) {
    throw DataError("subject " + rec.subject_id + ": insufficient data, windows need " +
                    std::to_string(spec.history + spec.horizon) + " glucose samples but only " +
                    std::to_string(g.size()) + " are available");
  }
  const std::size_t n_train = train_count(n_windows, train_ratio);
  if (n_train == 0 || n_train >= n_windows) {
    throw DataError("subject " + rec.subject_id + ": " + std::to_string(n_windows) +
                    " windows cannot be split into non-empty train and test parts");
  }
  // Statistics only see samples that precede the end of the last training window.
  const double train_end =
      g.time_at((n_train - 1) * spec.stride + spec.history + spec.horizon);

  PreparedSubject out;
  out.subject_id = rec.subject_id;
  out.cohort = rec.cohort;
  for (auto& [m, s] : clean.series) {
    std::size_t fit = 0;
    while (fit < s.size() && s.time_at(fit) < train_end - kTimeEps) ++fit;
    auto [normalized, norm] = normalize_z(s, std::max<std::size_t>(fit, 1));
    s = std::move(normalized);
    if (m == Modality::Glucose) {
      out.glucose_norm = norm;
    } else {
      out.aux_norms.emplace(m, norm);
    }
  }
  out.split = split_train_test(make_windows(clean, spec, features), train_ratio);
  return out;
}

}  // namespace glumind
