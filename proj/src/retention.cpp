#include "glumind/retention.hpp"

#include "glumind/errors.hpp"

#include <array>
#include <cmath>

namespace glumind {

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {"none", "lwf", "ewc", "er"};

Var target_of(Tape& tape, const WindowSample& s) {
  return tape.constant(Eigen::Map<const Matrix>(s.target_future.data(), 1, static_cast<Index>(s.target_future.size())));
}

void require_batch(std::span<const WindowSample> batch) {
  if (batch.empty()) throw ContractError("loss over an empty batch");
}

}  // namespace

std::string_view retention_kind_name(RetentionMethod::Kind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<RetentionMethod::Kind> parse_retention_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<RetentionMethod::Kind>(i);
  }
  return std::nullopt;
}

void RetentionMethod::validate() const {
  if (lambda < 0.0 || lambda_ewc < 0.0) throw ConfigError("retention lambdas must be >= 0");
  if (!(replay_ratio >= 0.0 && replay_ratio <= 1.0)) throw ConfigError("replay_ratio must lie in [0, 1]");
  if (buffer_cap < 1) throw ConfigError("buffer_cap must be >= 1");
  if (fisher_samples < 1) throw ConfigError("fisher_samples must be >= 1");
}

std::string RetentionMethod::label() const {
  switch (kind) {
    case Kind::None:
      return "None";
    case Kind::LwF:
      return "LwF";
    case Kind::EWC:
      return "EWC";
    case Kind::ER:
      return "ER";
  }
  return "";
}

// ---- losses -------------------------------------------------------------------

Var prediction_loss(const GluMindModel& model, const ParamBinding& b, std::span<const WindowSample> batch) {
  require_batch(batch);
  Tape& tape = b.tape();
  Var acc;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Var term = mse(model.forward(b, batch[i]), target_of(tape, batch[i]));
    acc = i == 0 ? term : add(acc, term);
  }
  return scale(acc, 1.0 / static_cast<double>(batch.size()));
}

LwfLoss lwf_total_loss(const GluMindModel& model, const ParamBinding& b, const SnapshotModel& snapshot,
                       std::span<const WindowSample> batch, double lambda) {
  require_batch(batch);
  if (!(snapshot.model().config() == model.config()) || !snapshot.model().params().same_layout(model.params())) {
    throw CompatibilityError("LwF snapshot configuration does not match the trained model");
  }
  if (lambda < 0.0) throw ConfigError("LwF lambda must be >= 0");
  Tape& tape = b.tape();
  const auto teacher = snapshot.predict(batch);
  Var pred_acc;
  Var distill_acc;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Var out = model.forward(b, batch[i]);
    Var teacher_out = tape.constant(Eigen::Map<const Matrix>(teacher[i].data(), 1, static_cast<Index>(teacher[i].size())));
    Var p = mse(out, target_of(tape, batch[i]));
    Var d = mse(out, teacher_out);
    pred_acc = i == 0 ? p : add(pred_acc, p);
    distill_acc = i == 0 ? d : add(distill_acc, d);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  LwfLoss loss;
  loss.pred = scale(pred_acc, inv);
  loss.distill = scale(distill_acc, inv);
  // lambda == 0 leaves the graph of L_pred untouched, so gradients match exactly.
  loss.total = lambda == 0.0 ? loss.pred : add(loss.pred, scale(loss.distill, lambda));
  return loss;
}

Var ewc_penalty(const ParamBinding& b, const EwcState* state, double lambda_ewc) {
  if (state == nullptr) throw ContractError("EWC state error: no anchor parameters recorded");
  Tape& tape = b.tape();
  Var acc = tape.constant(Matrix::Zero(1, 1));
  for (const auto& [name, anchor] : state->anchor) {
    auto f = state->fisher.find(name);
    if (f == state->fisher.end()) continue;
    Var drift = sub(b[name], tape.constant(anchor.data));
    acc = add(acc, sum(hadamard(tape.constant(f->second), square(drift))));
  }
  return scale(acc, 0.5 * lambda_ewc);
}

double ewc_penalty_value(const ParamStore& params, const EwcState* state, double lambda_ewc) {
  if (state == nullptr) throw ContractError("EWC state error: no anchor parameters recorded");
  double acc = 0.0;
  for (const auto& [name, anchor] : state->anchor) {
    auto f = state->fisher.find(name);
    if (f == state->fisher.end()) continue;
    acc += (f->second.array() * (params.at(name).data - anchor.data).array().square()).sum();
  }
  return 0.5 * lambda_ewc * acc;
}

std::map<std::string, Matrix, std::less<>> estimate_fisher(const GluMindModel& model,
                                                           std::span<const WindowSample> windows,
                                                           std::size_t batch_size, int batches) {
  std::map<std::string, Matrix, std::less<>> fisher;
  for (const auto& [name, t] : model.params()) fisher.emplace(name, Matrix::Zero(t.data.rows(), t.data.cols()));
  if (windows.empty() || batch_size == 0) return fisher;
  ParamStore work = model.params();
  int used = 0;
  for (std::size_t begin = 0; begin < windows.size() && used < batches; begin += batch_size, ++used) {
    const auto batch = windows.subspan(begin, std::min(batch_size, windows.size() - begin));
    Tape tape;
    ParamBinding binding(tape, work);
    backward(prediction_loss(model, binding, batch), binding, work);
    for (auto& [name, f] : fisher) f += work.at(name).grad->cwiseProduct(*work.at(name).grad);
  }
  for (auto& [_, f] : fisher) f /= static_cast<double>(used);
  return fisher;
}

// ---- replay ------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("replay buffer capacity must be >= 1");
}

void ReplayBuffer::offer(const WindowSample& sample, Rng& rng) {
  ++seen_;
  if (items_.size() < capacity_) {
    items_.push_back(sample);
    return;
  }
  const std::uint64_t j = rng.below(seen_);
  if (j < capacity_) items_[j] = sample;
}

std::size_t replay_count(double replay_ratio, std::size_t batch_size) {
  if (!(replay_ratio >= 0.0 && replay_ratio <= 1.0)) throw ConfigError("replay_ratio must lie in [0, 1]");
  return static_cast<std::size_t>(std::ceil(replay_ratio * static_cast<double>(batch_size) - 1e-12));
}

std::vector<WindowSample> er_mix_batch(std::span<const WindowSample> current, const ReplayBuffer& buffer,
                                       double replay_ratio, std::size_t batch_size, Rng& rng) {
  if (buffer.empty()) return {current.begin(), current.end()};
  const std::size_t k = replay_count(replay_ratio, batch_size);
  std::vector<WindowSample> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < k; ++i) out.push_back(buffer.items()[rng.below(buffer.size())]);
  const std::size_t rest = std::min(current.size(), batch_size > k ? batch_size - k : 0);
  out.insert(out.end(), current.begin(), current.begin() + static_cast<std::ptrdiff_t>(rest));
  return out;
}

// ---- forgetting ----------------------------------------------------------------

ForgettingMetrics forgetting_metrics(double rmse_initial, double rmse_final) {
  if (!(rmse_initial > 0.0)) throw DomainError("forgetting metrics need rmse_initial > 0");
  return {rmse_final / rmse_initial, rmse_final - rmse_initial, (rmse_final - rmse_initial) / rmse_initial * 100.0};
}

ForgettingMetrics mean_metrics(std::span<const ForgettingMetrics> items) {
  ForgettingMetrics m{0.0, 0.0, 0.0};
  if (items.empty()) return ForgettingMetrics{};
  for (const auto& it : items) {
    m.fr += it.fr;
    m.af += it.af;
    m.bwt += it.bwt;
  }
  const auto n = static_cast<double>(items.size());
  return {m.fr / n, m.af / n, m.bwt / n};
}

// ---- context -------------------------------------------------------------------

RetentionContext::RetentionContext(RetentionMethod method, std::uint64_t seed)
    : method_(method), rng_(seed), buffer_(std::max<std::size_t>(1, method.buffer_cap)) {
  method_.validate();
}

std::size_t RetentionContext::current_per_batch(std::size_t batch_size) const {
  if (method_.kind != RetentionMethod::Kind::ER || buffer_.empty()) return batch_size;
  const std::size_t k = replay_count(method_.replay_ratio, batch_size);
  return std::max<std::size_t>(1, batch_size > k ? batch_size - k : 0);
}

std::vector<WindowSample> RetentionContext::assemble_batch(std::span<const WindowSample> current,
                                                           std::size_t batch_size) {
  if (method_.kind != RetentionMethod::Kind::ER) return {current.begin(), current.end()};
  return er_mix_batch(current, buffer_, method_.replay_ratio, batch_size, rng_);
}

Var RetentionContext::loss(const GluMindModel& model, const ParamBinding& b, std::span<const WindowSample> batch) const {
  switch (method_.kind) {
    case RetentionMethod::Kind::LwF:
      if (snapshot_) return lwf_total_loss(model, b, *snapshot_, batch, method_.lambda).total;
      break;
    case RetentionMethod::Kind::EWC:
      if (ewc_) return add(prediction_loss(model, b, batch), ewc_penalty(b, &*ewc_, method_.lambda_ewc));
      break;
    default:
      break;
  }
  return prediction_loss(model, b, batch);
}

void RetentionContext::end_cohort(const GluMindModel& model, std::span<const WindowSample> cohort_train,
                                  std::size_t batch_size) {
  switch (method_.kind) {
    case RetentionMethod::Kind::LwF:
      snapshot_.emplace(model);
      break;
    case RetentionMethod::Kind::EWC: {
      auto fresh = estimate_fisher(model, cohort_train, batch_size, method_.fisher_samples);
      if (!ewc_) {
        ewc_.emplace(EwcState{model.params(), std::move(fresh)});
      } else {
        // Fisher terms accumulate across cohorts; the anchor moves to the latest optimum.
        for (auto& [name, f] : ewc_->fisher) f += fresh.at(name);
        ewc_->anchor = model.params();
      }
      break;
    }
    case RetentionMethod::Kind::ER:
      for (const auto& w : cohort_train) buffer_.offer(w, rng_);
      break;
    case RetentionMethod::Kind::None:
      break;
  }
}

}  // namespace glumind
