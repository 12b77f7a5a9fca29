// glumind: data generation, cohort sequences, ablations and checkpoint evaluation.

#include "glumind/errors.hpp"
#include "glumind/harness.hpp"
#include "glumind/log.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace glumind;

namespace {

enum Exit : int { kOk = 0, kUsage = 2, kIo = 3, kAbort = 4, kIncompatible = 5 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<Cohort> parse_cohort_list(const std::string& text) {
  std::vector<Cohort> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto c = parse_cohort(item);
    if (!c) throw UsageError("unknown cohort '" + item + "'");
    out.push_back(*c);
  }
  if (out.empty()) throw UsageError("--cohorts names no cohort");
  return out;
}

ExperimentPlan read_plan_or_usage(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("plan file not found: " + path);
  try {
    return load_plan(path);
  } catch (const ConfigError& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---- commands -----------------------------------------------------------------

struct GenDataArgs {
  std::string cohorts = "Healthy,PreT2DM,Oral,Insulin";
  int subjects = 8;
  int days = 10;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
  if (a.days < 1) throw UsageError("--days must be >= 1");
  if (a.subjects < 1) throw UsageError("--subjects must be >= 1");
  ExperimentPlan plan;
  plan.cohort_order = parse_cohort_list(a.cohorts);
  plan.subjects_per_cohort = a.subjects;
  plan.days = a.days;
  plan.seed = a.seed;

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out + ": " + ec.message());

  DatasetManifest manifest;
  manifest.seed = a.seed;
  manifest.days = a.days;
  for (const auto& cd : load_or_generate(plan)) {
    for (const auto& rec : cd.subjects) {
      const std::string file = rec.subject_id + ".csv";
      write_csv(fs::path(a.out) / file, rec);
      manifest.subjects.push_back({rec.subject_id, cd.cohort, file, derive_subject_seed(a.seed, rec.subject_id),
                                   plan.spec_for(cd.cohort)});
    }
  }
  write_manifest(fs::path(a.out) / "manifest.json", manifest);
  return kOk;
}

struct SequenceArgs {
  std::string plan;
  std::string retention;
  std::optional<double> lambda;
  std::optional<int> epochs;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_run_sequence(const SequenceArgs& a) {
  ExperimentPlan plan = read_plan_or_usage(a.plan);
  if (!a.retention.empty()) {
    auto kind = parse_retention_kind(a.retention);
    if (!kind) throw UsageError("unknown retention '" + a.retention + "'");
    plan.retention.kind = *kind;
  }
  if (a.lambda) plan.retention.lambda = *a.lambda;
  if (a.epochs) plan.epochs = *a.epochs;
  if (a.runs) plan.runs = *a.runs;
  if (a.seed) plan.seed = *a.seed;
  try {
    plan.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  SequenceOptions options;
  options.checkpoint_dir = fs::path(a.out) / "checkpoints";
  const auto result = run_sequence(plan, options);
  write_sequence_outputs(a.out, plan, result);
  const auto& avg = result.report.avg_over_cohorts;
  std::cerr << "avg FR " << format4(avg.fr) << "  AF " << format4(avg.af) << "  BWT " << format4(avg.bwt) << '\n';
  return kOk;
}

struct AblateArgs {
  std::string kind;
  std::string plan;
  std::string out;
};

int cmd_ablate(const AblateArgs& a) {
  auto kind = parse_ablation_kind(a.kind);
  if (!kind) throw UsageError("unknown ablation kind '" + a.kind + "'");
  const ExperimentPlan plan = read_plan_or_usage(a.plan);
  const auto rows = run_ablation(*kind, plan);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw IoError("cannot create " + a.out + ": " + ec.message());
  write_ablation_csv(fs::path(a.out) / ("ablation_" + a.kind + ".csv"), rows);
  write_json_file(fs::path(a.out) / "plan.json", plan_to_json(plan));
  return kOk;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  int horizon = 0;
  std::string cohort;
};

Cohort cohort_for_data(const fs::path& data, const std::string& flag) {
  if (!flag.empty()) {
    auto c = parse_cohort(flag);
    if (!c) throw UsageError("unknown cohort '" + flag + "'");
    return *c;
  }
  const fs::path manifest = data.parent_path() / "manifest.json";
  if (fs::exists(manifest)) {
    for (const auto& e : read_manifest(manifest).subjects) {
      if (e.file == data.filename().string()) return e.cohort;
    }
  }
  return Cohort::Healthy;
}

int cmd_evaluate(const EvaluateArgs& a) {
  fs::path sidecar = a.checkpoint;
  sidecar.replace_extension(".json");
  std::ifstream in(sidecar);
  if (!in) throw IoError("cannot open checkpoint sidecar " + sidecar.string());
  nlohmann::json side;
  try {
    in >> side;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(sidecar.string() + ": " + e.what());
  }

  const ModelConfig cfg = model_config_from_json(side.at("model"));
  const FeatureSet features = FeatureSet::parse(side.at("feature_set").get<std::string>());
  WindowSpec window;
  window.history = side.at("window").at("history").get<std::size_t>();
  window.horizon = side.at("window").at("horizon").get<std::size_t>();
  window.stride = side.at("window").at("stride").get<std::size_t>();
  const double train_ratio = side.at("train_ratio").get<double>();
  const int run = side.at("run").get<int>();

  if (a.horizon <= 0 || a.horizon % 5 != 0 || a.horizon / 5 > cfg.horizon) {
    throw CompatibilityError("horizon " + std::to_string(a.horizon) + " min not covered by checkpoint horizon " +
                             std::to_string(cfg.horizon * 5) + " min");
  }
  GluMindModel model(cfg, load_checkpoint(a.checkpoint));

  const fs::path data(a.data);
  const SubjectRecord rec = load_csv(data, cohort_for_data(data, a.cohort));
  for (Modality m : features.aux_modalities()) {
    if (!rec.has(m)) {
      throw CompatibilityError("feature_set " + features.label() + " needs modality '" +
                               std::string(modality_name(m)) + "' missing from " + data.string());
    }
  }
  const PreparedSubject subject = prepare_subject(rec, window, features, train_ratio);
  const auto ev = evaluate_subject(model, subject, run, a.horizon / 5);
  std::cout << metrics_row_to_json(ev.final_step).dump() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glumind: multimodal glucose forecasting with continual learning"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level;
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off (default: GLUMIND_LOG or warn)");

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write synthetic subject CSVs and a manifest");
  gen_cmd->add_option("--cohorts", gen.cohorts, "Comma-separated cohort list");
  gen_cmd->add_option("--subjects", gen.subjects, "Subjects per cohort");
  gen_cmd->add_option("--days", gen.days, "Days of data per subject");
  gen_cmd->add_option("--seed", gen.seed, "Base seed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  SequenceArgs seq;
  auto* seq_cmd = app.add_subcommand("run-sequence", "Sequential fine-tuning over the plan's cohorts");
  seq_cmd->add_option("--plan", seq.plan, "Plan JSON file")->required();
  seq_cmd->add_option("--retention", seq.retention, "none|lwf|ewc|er (overrides the plan)");
  seq_cmd->add_option("--lambda", seq.lambda, "LwF distillation weight");
  seq_cmd->add_option("--epochs", seq.epochs, "Epochs per subject");
  seq_cmd->add_option("--runs", seq.runs, "Independent runs");
  seq_cmd->add_option("--seed", seq.seed, "Base seed");
  seq_cmd->add_option("--out", seq.out, "Output directory")->required();

  AblateArgs abl;
  auto* abl_cmd = app.add_subcommand("ablate", "Run one ablation grid");
  abl_cmd->add_option("--kind", abl.kind, "features|attention|horizons|histories|retention")->required();
  abl_cmd->add_option("--plan", abl.plan, "Plan JSON file")->required();
  abl_cmd->add_option("--out", abl.out, "Output directory")->required();

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on one subject's test split");
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file (.glum, sidecar .json alongside)")->required();
  ev_cmd->add_option("--data", ev.data, "Subject CSV")->required();
  ev_cmd->add_option("--horizon", ev.horizon, "Horizon in minutes")->required();
  ev_cmd->add_option("--cohort", ev.cohort, "Cohort of the subject (default: from manifest)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (!log_level.empty()) set_log_level(log_level);
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (seq_cmd->parsed()) return cmd_run_sequence(seq);
    if (abl_cmd->parsed()) return cmd_ablate(abl);
    if (ev_cmd->parsed()) return cmd_evaluate(ev);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const CompatibilityError& e) {
    std::cerr << "incompatible: " << e.what() << '\n';
    return kIncompatible;
  } catch (const TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kAbort;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kOk;
}
