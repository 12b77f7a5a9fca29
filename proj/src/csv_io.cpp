#include "glumind/errors.hpp"
#include "glumind/signals.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace glumind {

namespace {

constexpr std::string_view kCsvHeader = "time_min,modality,value";

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string accepted_modalities() {
  std::string out;
  for (Modality m : kAllModalities) {
    if (!out.empty()) out += ", ";
    out += modality_name(m);
  }
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t data_row) {
  return path.string() + ": data row " + std::to_string(data_row) + " (file line " + std::to_string(data_row + 1) + ")";
}

}  // namespace

void write_csv(const std::filesystem::path& path, const SubjectRecord& rec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << kCsvHeader << '\n';
  std::vector<const SignalSeries*> ordered;
  for (const auto& [_, s] : rec.series) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const SignalSeries* a, const SignalSeries* b) { return modality_name(a->modality) < modality_name(b->modality); });
  for (const SignalSeries* s : ordered) {
    const std::string name(modality_name(s->modality));
    for (std::size_t i = 0; i < s->size(); ++i) {
      out << format_number(s->time_at(i)) << ',' << name << ',';
      if (!is_gap(s->values[i])) out << format_number(s->values[i]);
      out << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

SubjectRecord load_csv(const std::filesystem::path& path, Cohort cohort) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open subject file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file, expected header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw ParseError(path.string() + ": malformed header '" + line + "', expected '" + std::string(kCsvHeader) + "'");
  }

  struct Column {
    std::vector<double> times;
    std::vector<double> values;
  };
  std::map<Modality, Column> columns;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos) {
      throw ParseError(where(path, row) + ": expected 3 fields");
    }
    const std::string_view view(line);
    double t = 0.0;
    if (!parse_double(view.substr(0, c1), t)) throw ParseError(where(path, row) + ": non-numeric time_min");
    const auto name = view.substr(c1 + 1, c2 - c1 - 1);
    const auto modality = parse_modality(name);
    if (!modality) {
      throw ParseError(where(path, row) + ": unknown modality '" + std::string(name) + "' (accepted: " +
                       accepted_modalities() + ")");
    }
    const auto cell = view.substr(c2 + 1);
    double v = kGap;
    if (!cell.empty() && !parse_double(cell, v)) throw ParseError(where(path, row) + ": non-numeric value");
    Column& col = columns[*modality];
    if (!col.times.empty() && !(t > col.times.back())) {
      throw ParseError(where(path, row) + ": timestamps of '" + std::string(name) + "' are not strictly increasing");
    }
    col.times.push_back(t);
    col.values.push_back(v);
  }

  SubjectRecord rec;
  rec.subject_id = path.stem().string();
  rec.cohort = cohort;
  for (auto& [m, col] : columns) {
    SignalSeries s;
    s.modality = m;
    s.t0_min = col.times.front();
    s.period_min = col.times.size() > 1 ? col.times[1] - col.times[0] : native_period(m);
    for (std::size_t i = 1; i < col.times.size(); ++i) {
      const double expected = s.t0_min + static_cast<double>(i) * s.period_min;
      if (std::abs(col.times[i] - expected) > 1e-6 * std::max(1.0, std::abs(expected))) {
        throw ParseError(path.string() + ": modality '" + std::string(modality_name(m)) +
                         "' is not uniformly sampled");
      }
    }
    s.values = std::move(col.values);
    s.units = std::string(default_units(m));
    rec.series.emplace(m, std::move(s));
  }
  if (!rec.has(Modality::Glucose)) throw ParseError(path.string() + ": no glucose rows");
  if (std::abs(rec.glucose().period_min - kGlucosePeriod) > 1e-9) {
    throw ParseError(path.string() + ": glucose must be sampled every 5 minutes");
  }
  return rec;
}

// ---- manifest -------------------------------------------------------------------

namespace {

nlohmann::ordered_json spec_to_json(const CohortSpec& s) {
  return {{"baseline_glucose", s.baseline_glucose}, {"glucose_sd", s.glucose_sd},
          {"meal_spike_amp", s.meal_spike_amp},     {"activity_dip_coeff", s.activity_dip_coeff},
          {"stress_coupling", s.stress_coupling},   {"noise_sd", s.noise_sd},
          {"meal_peak_min", s.meal_peak_min}};
}

CohortSpec spec_from_json(const nlohmann::json& j) {
  CohortSpec s;
  s.baseline_glucose = j.at("baseline_glucose").get<double>();
  s.glucose_sd = j.at("glucose_sd").get<double>();
  s.meal_spike_amp = j.at("meal_spike_amp").get<double>();
  s.activity_dip_coeff = j.at("activity_dip_coeff").get<double>();
  s.stress_coupling = j.at("stress_coupling").get<double>();
  s.noise_sd = j.at("noise_sd").get<double>();
  s.meal_peak_min = j.value("meal_peak_min", s.meal_peak_min);
  return s;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  nlohmann::ordered_json j;
  j["seed"] = manifest.seed;
  j["days"] = manifest.days;
  nlohmann::ordered_json periods;
  for (Modality m : kAllModalities) periods[std::string(modality_name(m))] = native_period(m);
  j["periods_min"] = periods;
  j["subjects"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.subjects) {
    j["subjects"].push_back({{"subject_id", e.subject_id},
                             {"cohort", std::string(cohort_name(e.cohort))},
                             {"file", e.file},
                             {"seed", e.seed},
                             {"cohort_spec", spec_to_json(e.spec)}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.days = j.at("days").get<int>();
    for (const auto& e : j.at("subjects")) {
      ManifestEntry entry;
      entry.subject_id = e.at("subject_id").get<std::string>();
      const auto cohort = parse_cohort(e.at("cohort").get<std::string>());
      if (!cohort) throw ParseError(path.string() + ": unknown cohort for " + entry.subject_id);
      entry.cohort = *cohort;
      entry.file = e.at("file").get<std::string>();
      entry.seed = e.at("seed").get<std::uint64_t>();
      if (e.contains("cohort_spec")) entry.spec = spec_from_json(e.at("cohort_spec"));
      m.subjects.push_back(std::move(entry));
    }
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path.string() + ": " + ex.what());
  }
}

}  // namespace glumind
