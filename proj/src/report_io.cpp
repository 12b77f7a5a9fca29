#include "glumind/errors.hpp"
#include "glumind/harness.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace glumind {

using nlohmann::ordered_json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

ordered_json metrics_json(const ForgettingMetrics& m) {
  return ordered_json{{"fr", m.fr}, {"af", m.af}, {"bwt", m.bwt}};
}

void write_report_csv_body(std::ostream& out, const ForgettingReport& report) {
  out << "cohort,rmse_initial,rmse_final,fr,af,bwt\n";
  for (const auto& r : report.rows) {
    out << cohort_name(r.cohort) << ',' << format4(r.rmse_initial) << ',' << format4(r.rmse_final) << ','
        << format4(r.fr) << ',' << format4(r.af) << ',' << format4(r.bwt) << '\n';
  }
  const std::pair<const char*, const ForgettingMetrics*> avgs[] = {{"avg_over_cohorts", &report.avg_over_cohorts},
                                                                   {"avg_over_subjects", &report.avg_over_subjects},
                                                                   {"avg_over_runs", &report.avg_over_runs}};
  for (const auto& [label, m] : avgs) {
    out << label << ",,," << format4(m->fr) << ',' << format4(m->af) << ',' << format4(m->bwt) << '\n';
  }
}

}  // namespace

std::string format4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  auto out = open_out(path);
  out << "run,cohort,subject,horizon_min,rmse,mae,pearson_r\n";
  for (const auto& r : rows) {
    out << r.run << ',' << cohort_name(r.cohort) << ',' << r.subject << ',' << r.horizon_min << ',' << format4(r.rmse)
        << ',' << format4(r.mae) << ',' << (r.pearson_r ? format4(*r.pearson_r) : "") << '\n';
  }
  finish(out, path);
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "run,cohort,subject,horizon_min,rmse,mae,pearson_r") {
    throw ParseError(path.string() + ": unexpected metrics header");
  }
  std::vector<MetricsRow> rows;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != 7) throw ParseError(path.string() + ": data row " + std::to_string(n) + " needs 7 cells");
    try {
      MetricsRow r;
      r.run = std::stoi(c[0]);
      auto cohort = parse_cohort(c[1]);
      if (!cohort) throw ParseError("unknown cohort '" + c[1] + "'");
      r.cohort = *cohort;
      r.subject = c[2];
      r.horizon_min = std::stoi(c[3]);
      r.rmse = std::stod(c[4]);
      r.mae = std::stod(c[5]);
      if (!c[6].empty()) r.pearson_r = std::stod(c[6]);
      rows.push_back(r);
    } catch (const std::logic_error& e) {
      throw ParseError(path.string() + ": data row " + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

void write_forgetting_csv(const std::filesystem::path& path, const ForgettingReport& report) {
  auto out = open_out(path);
  write_report_csv_body(out, report);
  finish(out, path);
}

void write_cohort_summary_csv(const std::filesystem::path& path, const std::vector<CohortSummaryRow>& rows) {
  auto out = open_out(path);
  out << "run,cohort,rmse_subject_macro,rmse_window_micro,mae_subject_macro,mae_window_micro,"
         "rmse_final_subject_macro,fr,af,bwt\n";
  for (const auto& r : rows) {
    out << r.run << ',' << cohort_name(r.cohort) << ',' << format4(r.rmse_subject_macro) << ','
        << format4(r.rmse_window_micro) << ',' << format4(r.mae_subject_macro) << ',' << format4(r.mae_window_micro)
        << ',' << format4(r.rmse_final_subject_macro) << ',' << format4(r.forgetting.fr) << ','
        << format4(r.forgetting.af) << ',' << format4(r.forgetting.bwt) << '\n';
  }
  finish(out, path);
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  auto out = open_out(path);
  out << "kind,config,cohort,runs,rmse_mean,rmse_sd,mae_mean,mae_sd,fr_mean,fr_sd\n";
  for (const auto& r : rows) {
    out << r.kind << ',' << r.config << ',' << cohort_name(r.cohort) << ',' << r.runs << ',' << format4(r.rmse_mean)
        << ',' << format4(r.rmse_sd) << ',' << format4(r.mae_mean) << ',' << format4(r.mae_sd) << ','
        << format4(r.fr_mean) << ',' << format4(r.fr_sd) << '\n';
  }
  finish(out, path);
}

ordered_json metrics_row_to_json(const MetricsRow& row) {
  ordered_json j{{"run", row.run},
                 {"cohort", cohort_name(row.cohort)},
                 {"subject", row.subject},
                 {"horizon_min", row.horizon_min},
                 {"rmse", row.rmse},
                 {"mae", row.mae}};
  j["pearson_r"] = row.pearson_r ? ordered_json(*row.pearson_r) : ordered_json(nullptr);
  return j;
}

ordered_json forgetting_to_json(const ForgettingReport& report) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    rows.push_back(ordered_json{{"cohort", cohort_name(r.cohort)},
                                {"rmse_initial", r.rmse_initial},
                                {"rmse_final", r.rmse_final},
                                {"fr", r.fr},
                                {"af", r.af},
                                {"bwt", r.bwt}});
  }
  return ordered_json{{"rows", rows},
                      {"avg_over_cohorts", metrics_json(report.avg_over_cohorts)},
                      {"avg_over_subjects", metrics_json(report.avg_over_subjects)},
                      {"avg_over_runs", metrics_json(report.avg_over_runs)}};
}

void emit_metrics(const std::vector<MetricsRow>& rows, const ForgettingReport* report,
                  const std::filesystem::path& path, OutputFormat format, const ExperimentPlan* plan) {
  if (format == OutputFormat::CSV) {
    write_metrics_csv(path, rows);
    if (report != nullptr) {
      auto fpath = path;
      fpath.replace_filename(path.stem().string() + "_forgetting.csv");
      write_forgetting_csv(fpath, *report);
    }
    return;
  }
  ordered_json j;
  if (plan != nullptr) j["plan"] = plan_to_json(*plan);
  j["metrics"] = ordered_json::array();
  for (const auto& r : rows) j["metrics"].push_back(metrics_row_to_json(r));
  if (report != nullptr) j["forgetting"] = forgetting_to_json(*report);
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

void write_sequence_outputs(const std::filesystem::path& dir, const ExperimentPlan& plan, const SequenceResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_metrics_csv(dir / "metrics.csv", result.rows);
  write_metrics_csv(dir / "metrics_all_steps.csv", result.rows_all_steps);
  emit_metrics(result.rows, &result.report, dir / "metrics.json", OutputFormat::JSON, &plan);
  write_forgetting_csv(dir / "forgetting.csv", result.report);
  {
    auto out = open_out(dir / "forgetting.json");
    out << forgetting_to_json(result.report).dump(2) << '\n';
    finish(out, dir / "forgetting.json");
  }
  write_cohort_summary_csv(dir / "cohort_summary.csv", result.cohort_summary);
  auto out = open_out(dir / "plan.json");
  out << plan_to_json(plan).dump(2) << '\n';
  finish(out, dir / "plan.json");
}

}  // namespace glumind
