#include "glumind/harness.hpp"

#include "glumind/errors.hpp"
#include "glumind/metrics.hpp"
#include "glumind/optim.hpp"
#include "log.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace glumind {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kMinutesPerSample = kGlucosePeriod;

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + k + "'");
    }
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("plan field '") + key + "': " + e.what());
  }
}

Cohort cohort_from(const std::string& name) {
  auto c = parse_cohort(name);
  if (!c) throw ConfigError("unknown cohort '" + name + "'");
  return *c;
}

ordered_json spec_to_json(const CohortSpec& s) {
  return ordered_json{{"baseline_glucose", s.baseline_glucose}, {"glucose_sd", s.glucose_sd},
                      {"meal_spike_amp", s.meal_spike_amp},     {"activity_dip_coeff", s.activity_dip_coeff},
                      {"stress_coupling", s.stress_coupling},   {"noise_sd", s.noise_sd},
                      {"meal_peak_min", s.meal_peak_min}};
}

CohortSpec spec_from_json(const json& j, CohortSpec base) {
  reject_unknown(j,
                 {"baseline_glucose", "glucose_sd", "meal_spike_amp", "activity_dip_coeff", "stress_coupling",
                  "noise_sd", "meal_peak_min"},
                 "cohort spec");
  read_if(j, "baseline_glucose", base.baseline_glucose);
  read_if(j, "glucose_sd", base.glucose_sd);
  read_if(j, "meal_spike_amp", base.meal_spike_amp);
  read_if(j, "activity_dip_coeff", base.activity_dip_coeff);
  read_if(j, "stress_coupling", base.stress_coupling);
  read_if(j, "noise_sd", base.noise_sd);
  read_if(j, "meal_peak_min", base.meal_peak_min);
  base.validate();
  return base;
}

ordered_json retention_to_json(const RetentionMethod& r) {
  return ordered_json{{"kind", retention_kind_name(r.kind)}, {"lambda", r.lambda},
                      {"lambda_ewc", r.lambda_ewc},          {"fisher_samples", r.fisher_samples},
                      {"buffer_cap", r.buffer_cap},          {"replay_ratio", r.replay_ratio}};
}

RetentionMethod retention_from_json(const json& j, RetentionMethod r) {
  reject_unknown(j, {"kind", "lambda", "lambda_ewc", "fisher_samples", "buffer_cap", "replay_ratio"}, "retention");
  if (j.contains("kind")) {
    auto k = parse_retention_kind(j.at("kind").get<std::string>());
    if (!k) throw ConfigError("unknown retention kind '" + j.at("kind").get<std::string>() + "'");
    r.kind = *k;
  }
  read_if(j, "lambda", r.lambda);
  read_if(j, "lambda_ewc", r.lambda_ewc);
  read_if(j, "fisher_samples", r.fisher_samples);
  read_if(j, "buffer_cap", r.buffer_cap);
  read_if(j, "replay_ratio", r.replay_ratio);
  r.validate();
  return r;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation; 0 for fewer than two values.
double sd_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::string subject_id_for(Cohort c, int index) {
  std::string name(cohort_name(c));
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return std::tolower(ch); });
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%02d", index);
  return name + buf;
}

}  // namespace

// ---- plan -------------------------------------------------------------------

void ExperimentPlan::validate() const {
  if (cohort_order.empty()) throw ConfigError("cohort_order must name at least one cohort");
  if (subjects_per_cohort < 1) throw ConfigError("subjects_per_cohort must be >= 1");
  if (days < 1) throw ConfigError("days must be >= 1");
  if (window.history < 1 || window.horizon < 1 || window.stride < 1) {
    throw ConfigError("history, horizon and stride must be >= 1");
  }
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (runs < 1) throw ConfigError("runs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train_ratio must lie in (0, 1)");
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (history_grid.empty()) throw ConfigError("history_grid must not be empty");
  retention.validate();
  model_config_for(*this, 0).validate();
}

CohortSpec ExperimentPlan::spec_for(Cohort c) const {
  auto it = cohort_specs.find(c);
  return it != cohort_specs.end() ? it->second : CohortSpec::preset(c);
}

ordered_json plan_to_json(const ExperimentPlan& plan) {
  ordered_json j;
  j["cohort_order"] = ordered_json::array();
  for (Cohort c : plan.cohort_order) j["cohort_order"].push_back(cohort_name(c));
  j["subjects_per_cohort"] = plan.subjects_per_cohort;
  j["days"] = plan.days;
  j["history"] = plan.window.history;
  j["horizon"] = plan.window.horizon;
  j["stride"] = plan.window.stride;
  j["feature_set"] = plan.features.label();
  j["retention"] = retention_to_json(plan.retention);
  j["epochs"] = plan.epochs;
  j["lr"] = plan.lr;
  j["weight_decay"] = plan.weight_decay;
  j["runs"] = plan.runs;
  j["seed"] = plan.seed;
  j["batch_size"] = plan.batch_size;
  j["train_ratio"] = plan.train_ratio;
  j["grad_clip"] = plan.grad_clip;
  j["model"] = ordered_json{{"d_model", plan.d_model},
                            {"heads", plan.heads},
                            {"ff_hidden", plan.ff_hidden},
                            {"variant", variant_name(plan.variant)},
                            {"layers", plan.layers}};
  if (plan.data_dir) j["data_dir"] = *plan.data_dir;
  if (!plan.cohort_specs.empty()) {
    ordered_json specs = ordered_json::object();
    for (const auto& [c, s] : plan.cohort_specs) specs[std::string(cohort_name(c))] = spec_to_json(s);
    j["cohort_specs"] = specs;
  }
  j["history_grid"] = plan.history_grid;
  return j;
}

ExperimentPlan plan_from_json(const json& j) {
  reject_unknown(j,
                 {"cohort_order", "subjects_per_cohort", "days", "history", "horizon", "stride", "feature_set",
                  "retention", "epochs", "lr", "weight_decay", "runs", "seed", "batch_size", "train_ratio", "grad_clip", "model",
                  "data_dir", "cohort_specs", "history_grid"},
                 "plan");
  ExperimentPlan p;
  if (j.contains("cohort_order")) {
    p.cohort_order.clear();
    for (const auto& c : j.at("cohort_order")) p.cohort_order.push_back(cohort_from(c.get<std::string>()));
  }
  read_if(j, "subjects_per_cohort", p.subjects_per_cohort);
  read_if(j, "days", p.days);
  read_if(j, "history", p.window.history);
  read_if(j, "horizon", p.window.horizon);
  read_if(j, "stride", p.window.stride);
  if (j.contains("feature_set")) p.features = FeatureSet::parse(j.at("feature_set").get<std::string>());
  if (j.contains("retention")) p.retention = retention_from_json(j.at("retention"), p.retention);
  read_if(j, "epochs", p.epochs);
  read_if(j, "lr", p.lr);
  read_if(j, "weight_decay", p.weight_decay);
  read_if(j, "runs", p.runs);
  read_if(j, "seed", p.seed);
  read_if(j, "batch_size", p.batch_size);
  read_if(j, "train_ratio", p.train_ratio);
  read_if(j, "grad_clip", p.grad_clip);
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"d_model", "heads", "ff_hidden", "variant", "layers"}, "model");
    read_if(m, "d_model", p.d_model);
    read_if(m, "heads", p.heads);
    read_if(m, "ff_hidden", p.ff_hidden);
    read_if(m, "layers", p.layers);
    if (m.contains("variant")) {
      auto v = parse_variant(m.at("variant").get<std::string>());
      if (!v) throw ConfigError("unknown variant '" + m.at("variant").get<std::string>() + "'");
      p.variant = *v;
    }
  }
  if (j.contains("data_dir")) p.data_dir = j.at("data_dir").get<std::string>();
  if (j.contains("cohort_specs")) {
    for (const auto& [name, s] : j.at("cohort_specs").items()) {
      const Cohort c = cohort_from(name);
      p.cohort_specs[c] = spec_from_json(s, CohortSpec::preset(c));
    }
  }
  read_if(j, "history_grid", p.history_grid);
  p.validate();
  return p;
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open plan file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("plan file " + path.string() + ": " + e.what());
  }
  return plan_from_json(j);
}

ModelConfig model_config_for(const ExperimentPlan& plan, int run) {
  ModelConfig cfg;
  cfg.d_model = plan.d_model;
  cfg.heads = plan.heads;
  cfg.history = static_cast<Index>(plan.window.history);
  cfg.horizon = static_cast<Index>(plan.window.horizon);
  cfg.aux_modalities = plan.features.aux_modalities();
  cfg.ff_hidden = plan.ff_hidden;
  cfg.variant = plan.variant;
  cfg.seed = plan.seed + static_cast<std::uint64_t>(run);
  cfg.layers = plan.layers;
  cfg.max_len = std::max<Index>(cfg.max_len, static_cast<Index>(aux_window_length(plan.window.history, 1.0)));
  return cfg;
}

ordered_json model_config_to_json(const ModelConfig& cfg) {
  ordered_json aux = ordered_json::array();
  for (Modality m : cfg.aux_modalities) aux.push_back(modality_name(m));
  return ordered_json{{"d_model", cfg.d_model}, {"heads", cfg.heads},         {"history", cfg.history},
                      {"horizon", cfg.horizon}, {"aux_modalities", aux},      {"ff_hidden", cfg.ff_hidden},
                      {"variant", variant_name(cfg.variant)},                 {"seed", cfg.seed},
                      {"max_len", cfg.max_len}, {"layers", cfg.layers},       {"norm_eps", cfg.norm_eps}};
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown(j,
                 {"d_model", "heads", "history", "horizon", "aux_modalities", "ff_hidden", "variant", "seed",
                  "max_len", "layers", "norm_eps"},
                 "model config");
  ModelConfig cfg;
  read_if(j, "d_model", cfg.d_model);
  read_if(j, "heads", cfg.heads);
  read_if(j, "history", cfg.history);
  read_if(j, "horizon", cfg.horizon);
  read_if(j, "ff_hidden", cfg.ff_hidden);
  read_if(j, "seed", cfg.seed);
  read_if(j, "max_len", cfg.max_len);
  read_if(j, "layers", cfg.layers);
  read_if(j, "norm_eps", cfg.norm_eps);
  if (j.contains("variant")) {
    auto v = parse_variant(j.at("variant").get<std::string>());
    if (!v) throw ConfigError("unknown variant '" + j.at("variant").get<std::string>() + "'");
    cfg.variant = *v;
  }
  if (j.contains("aux_modalities")) {
    for (const auto& m : j.at("aux_modalities")) {
      auto mod = parse_modality(m.get<std::string>());
      if (!mod) throw ConfigError("unknown modality '" + m.get<std::string>() + "'");
      cfg.aux_modalities.push_back(*mod);
    }
  }
  cfg.validate();
  return cfg;
}

// ---- training & evaluation -----------------------------------------------------

Evaluation evaluate_subject(const GluMindModel& model, const PreparedSubject& subject, int run, Index step) {
  const Index m = model.config().horizon;
  if (step == 0) step = m;
  if (step < 1 || step > m) {
    throw CompatibilityError("horizon step " + std::to_string(step) + " outside the model's 1.." + std::to_string(m));
  }
  const auto& test = subject.split.test;
  if (test.empty()) throw DataError("subject " + subject.subject_id + " has no test windows");
  const auto preds = model.predict(test);
  const auto& norm = subject.glucose_norm;

  std::vector<double> p_final, t_final, p_all, t_all;
  for (std::size_t i = 0; i < test.size(); ++i) {
    for (Index s = 0; s < step; ++s) {
      const double p = norm.invert(preds[i][static_cast<std::size_t>(s)]);
      const double t = norm.invert(test[i].target_future[static_cast<std::size_t>(s)]);
      p_all.push_back(p);
      t_all.push_back(t);
      if (s == step - 1) {
        p_final.push_back(p);
        t_final.push_back(t);
      }
    }
  }

  auto row_for = [&](const std::vector<double>& p, const std::vector<double>& t) {
    MetricsRow row;
    row.run = run;
    row.cohort = subject.cohort;
    row.subject = subject.subject_id;
    row.horizon_min = static_cast<int>(static_cast<double>(step) * kMinutesPerSample);
    row.rmse = rmse(p, t);
    row.mae = mae(p, t);
    try {
      row.pearson_r = pearson(p, t);
    } catch (const DomainError&) {
      row.pearson_r.reset();
    }
    return row;
  };

  Evaluation ev;
  ev.final_step = row_for(p_final, t_final);
  ev.all_steps = row_for(p_all, t_all);
  for (std::size_t i = 0; i < p_final.size(); ++i) {
    const double e = p_final[i] - t_final[i];
    ev.sse += e * e;
    ev.sae += std::abs(e);
  }
  ev.count = p_final.size();
  return ev;
}

SubjectResult train_subject(GluMindModel& model, const PreparedSubject& subject, const ExperimentPlan& plan,
                            RetentionContext& retention, int run) {
  SubjectResult result;
  const auto& train = subject.split.train;
  if (train.empty()) throw DataError("subject " + subject.subject_id + " has no training windows");
  AdamW opt(AdamWConfig{plan.lr, 0.9, 0.999, 1e-8, plan.weight_decay});
  const std::span<const WindowSample> all(train);
  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    const std::size_t per = retention.current_per_batch(plan.batch_size);
    double total = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < all.size(); begin += per) {
      const auto chunk = all.subspan(begin, std::min(per, all.size() - begin));
      const auto batch = retention.assemble_batch(chunk, plan.batch_size);
      Tape tape;
      ParamBinding binding(tape, model.params());
      Var loss = retention.loss(model, binding, batch);
      total += loss.item();
      ++batches;
      backward(loss, binding, model.params());
      if (plan.grad_clip > 0.0) clip_grad_norm(model.params(), plan.grad_clip);
      opt.step(model.params());
    }
    result.epoch_losses.push_back(total / batches);
    detail::log().debug("{} epoch {} loss {:.6f}", subject.subject_id, epoch, result.epoch_losses.back());
  }
  result.evaluation = evaluate_subject(model, subject, run);
  return result;
}

std::vector<CohortData> load_or_generate(const ExperimentPlan& plan) {
  std::vector<CohortData> out;
  if (plan.data_dir) {
    const std::filesystem::path dir(*plan.data_dir);
    const auto manifest = read_manifest(dir / "manifest.json");
    for (Cohort c : plan.cohort_order) {
      CohortData cd{c, {}};
      for (const auto& e : manifest.subjects) {
        if (e.cohort != c) continue;
        if (static_cast<int>(cd.subjects.size()) >= plan.subjects_per_cohort) break;
        cd.subjects.push_back(load_csv(dir / e.file, c));
      }
      out.push_back(std::move(cd));
    }
    return out;
  }
  for (Cohort c : plan.cohort_order) {
    CohortData cd{c, {}};
    const CohortSpec spec = plan.spec_for(c);
    for (int i = 0; i < plan.subjects_per_cohort; ++i) {
      const std::string id = subject_id_for(c, i);
      cd.subjects.push_back(generate_subject(spec, plan.days, derive_subject_seed(plan.seed, id), id, c));
    }
    out.push_back(std::move(cd));
  }
  return out;
}

// ---- sequence --------------------------------------------------------------------

namespace {

struct CohortScore {
  double rmse_macro = 0.0;
  double rmse_micro = 0.0;
  double mae_macro = 0.0;
  double mae_micro = 0.0;
  std::vector<double> subject_rmse;
};

CohortScore score(std::span<const Evaluation> evals) {
  CohortScore s;
  double sse = 0.0, sae = 0.0;
  std::size_t n = 0;
  std::vector<double> maes;
  for (const auto& e : evals) {
    s.subject_rmse.push_back(e.final_step.rmse);
    maes.push_back(e.final_step.mae);
    sse += e.sse;
    sae += e.sae;
    n += e.count;
  }
  s.rmse_macro = mean_of(s.subject_rmse);
  s.mae_macro = mean_of(maes);
  s.rmse_micro = n > 0 ? std::sqrt(sse / static_cast<double>(n)) : 0.0;
  s.mae_micro = n > 0 ? sae / static_cast<double>(n) : 0.0;
  return s;
}

void write_checkpoint_pair(const std::filesystem::path& dir, const ExperimentPlan& plan, const GluMindModel& model,
                           int run, std::size_t k, Cohort c) {
  std::filesystem::create_directories(dir);
  const std::string stem = "run" + std::to_string(run) + "_cohort" + std::to_string(k) + "_" + std::string(cohort_name(c));
  save_checkpoint(dir / (stem + ".glum"), model.params());
  ordered_json side;
  side["model"] = model_config_to_json(model.config());
  side["feature_set"] = plan.features.label();
  side["window"] = ordered_json{{"history", plan.window.history}, {"horizon", plan.window.horizon}, {"stride", plan.window.stride}};
  side["train_ratio"] = plan.train_ratio;
  side["run"] = run;
  side["cohort"] = cohort_name(c);
  std::ofstream out(dir / (stem + ".json"));
  if (!out) throw IoError("cannot write " + (dir / (stem + ".json")).string());
  out << side.dump(2) << '\n';
}

}  // namespace

SequenceResult run_sequence(const ExperimentPlan& plan, const SequenceOptions& options) {
  plan.validate();
  return run_sequence(plan, load_or_generate(plan), options);
}

SequenceResult run_sequence(const ExperimentPlan& plan, const std::vector<CohortData>& data,
                            const SequenceOptions& options) {
  plan.validate();
  SequenceResult result;

  std::vector<std::vector<PreparedSubject>> prepared;
  for (const auto& cd : data) {
    std::vector<PreparedSubject> ready;
    for (const auto& rec : cd.subjects) {
      try {
        auto ps = prepare_subject(rec, plan.window, plan.features, plan.train_ratio);
        if (ps.split.train.empty() || ps.split.test.empty()) {
          throw DataError("too few windows for a train/test split");
        }
        ready.push_back(std::move(ps));
      } catch (const DataError& e) {
        detail::log().warn("skipping subject {}: {}", rec.subject_id, e.what());
      }
    }
    if (ready.empty()) {
      throw TrainingAbort("cohort " + std::string(cohort_name(cd.cohort)) + " has no usable subjects");
    }
    for (const auto& ps : ready) {
      auto& usage = result.window_usage[ps.subject_id];
      for (const auto& w : ps.split.train) usage.first.push_back(w.start);
      for (const auto& w : ps.split.test) usage.second.push_back(w.start);
    }
    prepared.push_back(std::move(ready));
  }

  const std::size_t n_cohorts = prepared.size();
  // Cohorts whose forgetting is averaged: those followed by further training.
  const std::size_t n_eval = n_cohorts > 1 ? n_cohorts - 1 : n_cohorts;

  std::vector<std::vector<double>> init_by_cohort(n_cohorts), final_by_cohort(n_cohorts);
  std::vector<ForgettingMetrics> per_subject;
  std::vector<ForgettingMetrics> per_run;

  for (int run = 0; run < plan.runs; ++run) {
    const ModelConfig cfg = model_config_for(plan, run);
    if (!cfg.canonical_horizon()) {
      detail::log().warn("horizon m={} is outside the 5/30/60-minute set", cfg.horizon);
    }
    GluMindModel model(cfg);
    RetentionContext ctx(plan.retention, derive_subject_seed(plan.seed + static_cast<std::uint64_t>(run), "retention"));
    std::vector<CohortScore> initial(n_cohorts);

    for (std::size_t k = 0; k < n_cohorts; ++k) {
      detail::log().info("run {} cohort {}", run, cohort_name(data[k].cohort));
      for (const auto& subject : prepared[k]) {
        auto sr = train_subject(model, subject, plan, ctx, run);
        result.rows.push_back(sr.evaluation.final_step);
        result.rows_all_steps.push_back(sr.evaluation.all_steps);
        result.epoch_losses.push_back(std::move(sr.epoch_losses));
      }
      std::vector<Evaluation> evals;
      for (const auto& subject : prepared[k]) evals.push_back(evaluate_subject(model, subject, run));
      initial[k] = score(evals);

      std::vector<WindowSample> cohort_train;
      for (const auto& subject : prepared[k]) {
        cohort_train.insert(cohort_train.end(), subject.split.train.begin(), subject.split.train.end());
      }
      ctx.end_cohort(model, cohort_train, plan.batch_size);
      if (options.checkpoint_dir) write_checkpoint_pair(*options.checkpoint_dir, plan, model, run, k, data[k].cohort);
    }

    std::vector<ForgettingMetrics> run_cohorts;
    for (std::size_t k = 0; k < n_cohorts; ++k) {
      std::vector<Evaluation> evals;
      for (const auto& subject : prepared[k]) evals.push_back(evaluate_subject(model, subject, run));
      const CohortScore fin = score(evals);

      CohortSummaryRow row;
      row.run = run;
      row.cohort = data[k].cohort;
      row.rmse_subject_macro = initial[k].rmse_macro;
      row.rmse_window_micro = initial[k].rmse_micro;
      row.mae_subject_macro = initial[k].mae_macro;
      row.mae_window_micro = initial[k].mae_micro;
      row.rmse_final_subject_macro = fin.rmse_macro;
      row.forgetting = forgetting_metrics(initial[k].rmse_macro, fin.rmse_macro);
      result.cohort_summary.push_back(row);

      init_by_cohort[k].push_back(initial[k].rmse_macro);
      final_by_cohort[k].push_back(fin.rmse_macro);
      if (k < n_eval) {
        run_cohorts.push_back(row.forgetting);
        for (std::size_t s = 0; s < fin.subject_rmse.size(); ++s) {
          per_subject.push_back(forgetting_metrics(initial[k].subject_rmse[s], fin.subject_rmse[s]));
        }
      }
    }
    per_run.push_back(mean_metrics(run_cohorts));
  }

  std::vector<ForgettingMetrics> per_cohort;
  for (std::size_t k = 0; k < n_cohorts; ++k) {
    const double init = mean_of(init_by_cohort[k]);
    const double fin = mean_of(final_by_cohort[k]);
    const auto fm = forgetting_metrics(init, fin);
    result.report.rows.push_back(ForgettingRow{data[k].cohort, init, fin, fm.fr, fm.af, fm.bwt});
    if (k < n_eval) per_cohort.push_back(fm);
  }
  result.report.avg_over_cohorts = mean_metrics(per_cohort);
  result.report.avg_over_subjects = mean_metrics(per_subject);
  result.report.avg_over_runs = mean_metrics(per_run);
  return result;
}

// ---- ablations ---------------------------------------------------------------------

namespace {
constexpr std::array<std::string_view, 5> kAblationNames = {"features", "attention", "horizons", "histories",
                                                            "retention"};
}

std::string_view ablation_kind_name(AblationKind k) { return kAblationNames[static_cast<std::size_t>(k)]; }

std::optional<AblationKind> parse_ablation_kind(std::string_view name) {
  for (std::size_t i = 0; i < kAblationNames.size(); ++i) {
    if (kAblationNames[i] == name) return static_cast<AblationKind>(i);
  }
  return std::nullopt;
}

std::vector<AblationConfig> ablation_grid(AblationKind kind, const ExperimentPlan& base) {
  std::vector<AblationConfig> grid;
  switch (kind) {
    case AblationKind::FeatureSets:
      for (const char* fs : {"BG", "BG+W", "BG+Stress", "BG+W+R", "BG+W+Stress", "BG+W+HR", "BG+W+Stress+HR"}) {
        ExperimentPlan p = base;
        p.features = FeatureSet::parse(fs);
        p.retention = RetentionMethod::none();
        grid.push_back({fs, p});
      }
      break;
    case AblationKind::AttentionVariants:
      for (Variant v : {Variant::Full, Variant::CrossOnly, Variant::MultiScaleOnly, Variant::PlainMHA}) {
        ExperimentPlan p = base;
        p.variant = v;
        grid.push_back({std::string(variant_name(v)), p});
      }
      break;
    case AblationKind::Horizons:
      for (std::size_t m : {1, 6, 12}) {
        ExperimentPlan p = base;
        p.window.horizon = m;
        grid.push_back({"PH" + std::to_string(m * 5) + "min", p});
      }
      break;
    case AblationKind::Histories:
      for (std::size_t t : base.history_grid) {
        ExperimentPlan p = base;
        p.window.history = t;
        grid.push_back({"T" + std::to_string(t) + "_" + std::to_string(t * 5) + "min", p});
      }
      break;
    case AblationKind::RetentionMethods: {
      const RetentionMethod& r = base.retention;
      RetentionMethod none = RetentionMethod::none();
      RetentionMethod ewc = RetentionMethod::ewc(r.lambda_ewc, r.fisher_samples);
      RetentionMethod er = RetentionMethod::er(r.buffer_cap, r.replay_ratio);
      RetentionMethod lwf = RetentionMethod::lwf(r.lambda);
      for (const auto& m : {none, ewc, er, lwf}) {
        ExperimentPlan p = base;
        p.retention = m;
        grid.push_back({m.label(), p});
      }
      break;
    }
  }
  return grid;
}

std::vector<AblationRow> run_ablation(AblationKind kind, const ExperimentPlan& base) {
  base.validate();
  const auto data = load_or_generate(base);
  std::vector<AblationRow> rows;
  for (const auto& cfg : ablation_grid(kind, base)) {
    detail::log().info("ablation {} config {}", ablation_kind_name(kind), cfg.label);
    const auto res = run_sequence(cfg.plan, data);
    for (Cohort c : cfg.plan.cohort_order) {
      std::vector<double> r, a, f;
      for (const auto& row : res.cohort_summary) {
        if (row.cohort != c) continue;
        r.push_back(row.rmse_subject_macro);
        a.push_back(row.mae_subject_macro);
        f.push_back(row.forgetting.fr);
      }
      AblationRow out;
      out.kind = std::string(ablation_kind_name(kind));
      out.config = cfg.label;
      out.cohort = c;
      out.runs = static_cast<int>(r.size());
      out.rmse_mean = mean_of(r);
      out.rmse_sd = sd_of(r);
      out.mae_mean = mean_of(a);
      out.mae_sd = sd_of(a);
      out.fr_mean = mean_of(f);
      out.fr_sd = sd_of(f);
      rows.push_back(out);
    }
  }
  return rows;
}

}  // namespace glumind
