#include "glumind/errors.hpp"
#include "glumind/metrics.hpp"
#include "glumind/retention.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace glumind;

namespace {

ModelConfig one_step_config() {
  ModelConfig cfg;
  cfg.d_model = 4;
  cfg.heads = 1;
  cfg.history = 4;
  cfg.horizon = 1;
  cfg.ff_hidden = 4;
  cfg.variant = Variant::MultiScaleOnly;
  cfg.seed = 2;
  cfg.max_len = 8;
  return cfg;
}

/// A model whose single output is `value` for every input.
GluMindModel constant_model(double value) {
  GluMindModel m(one_step_config());
  m.params().at("head.weight").data.setZero();
  m.params().at("head.bias").data.setConstant(value);
  return m;
}

WindowSample labeled(double label) {
  WindowSample w = testutil::random_window(one_step_config(), 1);
  w.target_future = {label};
  return w;
}

std::vector<WindowSample> stream(std::size_t n) {
  std::vector<WindowSample> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].start = i;
  return out;
}

}  // namespace

TEST_SUITE("retention") {

TEST_CASE("lwf scalar toy") {
  const GluMindModel student = constant_model(3.0);
  const SnapshotModel teacher(constant_model(2.0));
  const std::vector<WindowSample> batch{labeled(1.0)};
  Tape tape;
  ParamBinding b(tape, student.params());
  const auto loss = lwf_total_loss(student, b, teacher, batch, 0.5);
  CHECK(loss.pred.item() == 4.0);
  CHECK(loss.distill.item() == 1.0);
  CHECK(loss.total.item() == 4.5);
}

TEST_CASE("lwf degenerate cases") {
  GluMindModel model(one_step_config());
  const std::vector<WindowSample> batch{testutil::random_window(one_step_config(), 4),
                                        testutil::random_window(one_step_config(), 5)};
  {
    Tape tape;
    ParamBinding b(tape, model.params());
    const auto loss = lwf_total_loss(model, b, SnapshotModel(constant_model(9.0)), batch, 0.0);
    CHECK(loss.total.item() == loss.pred.item());
    CHECK(loss.total.id == loss.pred.id);
  }
  {
    Tape tape;
    ParamBinding b(tape, model.params());
    const auto loss = lwf_total_loss(model, b, SnapshotModel(model), batch, 1.0);
    CHECK(loss.distill.item() == 0.0);
    CHECK(loss.total.item() == loss.pred.item());
  }
  ModelConfig other = one_step_config();
  other.d_model = 8;
  Tape tape;
  ParamBinding b(tape, model.params());
  CHECK_THROWS_AS(lwf_total_loss(model, b, SnapshotModel(GluMindModel(other)), batch, 1.0), CompatibilityError);
}

TEST_CASE("snapshot receives no gradient") {
  GluMindModel model(one_step_config());
  GluMindModel frozen(one_step_config());
  frozen.params().at("head.bias").data.array() += 0.5;
  const SnapshotModel snap(frozen);
  const std::vector<WindowSample> batch{testutil::random_window(one_step_config(), 7)};

  auto grads_for = [&](const SnapshotModel& s, double* value) {
    ParamStore work = model.params();
    Tape tape;
    ParamBinding b(tape, work);
    const auto loss = lwf_total_loss(model, b, s, batch, 1.0);
    *value = loss.total.item();
    backward(loss.total, b, work);
    return work;
  };
  double v1 = 0.0, v2 = 0.0;
  const ParamStore g1 = grads_for(snap, &v1);
  GluMindModel moved = frozen;
  moved.params().at("head.bias").data.array() += 1.0;
  const ParamStore g2 = grads_for(SnapshotModel(moved), &v2);
  CHECK(v1 != v2);
  for (const auto& [name, t] : snap.model().params()) CHECK_FALSE(t.grad.has_value());
  CHECK(snap.model().params().same_values(frozen.params()));
  // Only the distillation target moved, so only the gradient changes, not its structure.
  CHECK(g1.same_layout(g2));
}

TEST_CASE("ewc penalty") {
  ParamStore ps;
  ps.add("p", Tensor({1}, Matrix::Constant(1, 1, 5.0)));
  EwcState st;
  st.anchor.add("p", Tensor({1}, Matrix::Constant(1, 1, 2.0)));
  st.fisher["p"] = Matrix::Constant(1, 1, 2.0);
  CHECK(ewc_penalty_value(ps, &st, 1.0) == 9.0);
  {
    Tape tape;
    ParamBinding b(tape, ps);
    CHECK(ewc_penalty(b, &st, 1.0).item() == 9.0);
  }
  CHECK(ewc_penalty_value(st.anchor, &st, 1.0) == 0.0);
  EwcState flat = st;
  flat.fisher["p"].setZero();
  CHECK(ewc_penalty_value(ps, &flat, 100.0) == 0.0);
  CHECK_THROWS_AS(ewc_penalty_value(ps, nullptr, 1.0), ContractError);

  // Gradient of the penalty: lambda * F * (theta - anchor).
  Tape tape;
  ParamBinding b(tape, ps);
  backward(ewc_penalty(b, &st, 1.0), b, ps);
  CHECK((*ps.at("p").grad)(0, 0) == 6.0);
}

TEST_CASE("fisher is a mean of squared gradients") {
  GluMindModel model(one_step_config());
  std::vector<WindowSample> windows;
  for (std::uint64_t s = 0; s < 6; ++s) windows.push_back(testutil::random_window(one_step_config(), 30 + s));
  const auto fisher = estimate_fisher(model, windows, 2, 2);
  // Oracle: squared gradients of the first two batches, averaged.
  Matrix expect = Matrix::Zero(1, 1);
  for (std::size_t begin : {0u, 2u}) {
    ParamStore work = model.params();
    Tape tape;
    ParamBinding b(tape, work);
    backward(prediction_loss(model, b, std::span(windows).subspan(begin, 2)), b, work);
    expect += work.at("head.bias").grad->cwiseProduct(*work.at("head.bias").grad);
  }
  CHECK(std::abs(fisher.at("head.bias")(0, 0) - expect(0, 0) / 2.0) <= 1e-15);
  for (const auto& [_, f] : fisher) CHECK(f.minCoeff() >= 0.0);
}

TEST_CASE("replay mixing") {
  Rng rng(1);
  ReplayBuffer buffer(16);
  const auto current = stream(8);
  CHECK(er_mix_batch(current, buffer, 0.25, 8, rng).size() == 8);  // empty buffer
  auto past = stream(20);
  for (auto& w : past) {
    w.start += 1000;
    buffer.offer(w, rng);
  }
  CHECK(buffer.size() == 16);
  CHECK(buffer.seen() == 20);

  CHECK(replay_count(0.25, 8) == 2);
  const auto mixed = er_mix_batch(current, buffer, 0.25, 8, rng);
  REQUIRE(mixed.size() == 8);
  CHECK(std::count_if(mixed.begin(), mixed.end(), [](const auto& w) { return w.start >= 1000; }) == 2);
  for (std::size_t i = 2; i < 8; ++i) CHECK(mixed[i].start == i - 2);

  const auto none = er_mix_batch(current, buffer, 0.0, 8, rng);
  for (std::size_t i = 0; i < 8; ++i) CHECK(none[i].start == i);
  const auto all = er_mix_batch(current, buffer, 1.0, 8, rng);
  CHECK(std::all_of(all.begin(), all.end(), [](const auto& w) { return w.start >= 1000; }));

  Rng r1(5), r2(5);
  const auto a = er_mix_batch(current, buffer, 0.5, 8, r1);
  const auto b = er_mix_batch(current, buffer, 0.5, 8, r2);
  for (std::size_t i = 0; i < 8; ++i) CHECK(a[i].start == b[i].start);
}

TEST_CASE("reservoir sampling is uniform") {
  // 10^4 trials of a 20-item stream into a 5-slot buffer; each item should be
  // retained with probability 1/4. Pearson chi-square, 19 dof, 1% level.
  constexpr std::size_t kItems = 20, kCap = 5, kTrials = 10000;
  std::vector<double> hits(kItems, 0.0);
  Rng rng(2024);
  const auto items = stream(kItems);
  std::size_t largest = 0;
  for (std::size_t t = 0; t < kTrials; ++t) {
    ReplayBuffer buf(kCap);
    for (const auto& w : items) {
      buf.offer(w, rng);
      largest = std::max(largest, buf.size());
    }
    for (const auto& w : buf.items()) hits[w.start] += 1.0;
  }
  const double expected = static_cast<double>(kTrials * kCap) / kItems;
  double chi2 = 0.0;
  for (double h : hits) chi2 += (h - expected) * (h - expected) / expected;
  CHECK(largest == kCap);
  INFO("chi2 = ", chi2);
  CHECK(chi2 < 36.191);
}

TEST_CASE("forgetting metrics") {
  const auto same = forgetting_metrics(7.0, 7.0);
  CHECK(same.fr == 1.0);
  CHECK(same.af == 0.0);
  CHECK(same.bwt == 0.0);
  const auto up = forgetting_metrics(10.0, 12.0);
  CHECK(up.fr == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(up.af == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(up.bwt == doctest::Approx(20.0).epsilon(1e-13));
  CHECK_THROWS_AS(forgetting_metrics(0.0, 1.0), DomainError);

  // Identity BWT = (FR - 1) * 100 on arbitrary pairs.
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(1, 50), b = rng.uniform(1, 50);
    const auto m = forgetting_metrics(a, b);
    CHECK(std::abs(m.bwt - (m.fr - 1.0) * 100.0) <= 1e-10);
  }
  const ForgettingMetrics pair[] = {{1.0, 2.0, 0.0}, {2.0, 4.0, 100.0}};
  const auto mean = mean_metrics(pair);
  CHECK(mean.fr == 1.5);
  CHECK(mean.af == 3.0);
  CHECK(mean.bwt == 50.0);
}

TEST_CASE("forgetting identity on reference FR and BWT pairs") {
  const std::pair<double, double> rows[] = {{1.1107, 11.07}, {1.0474, 4.74}, {1.0727, 7.27}, {0.9249, -7.51}};
  for (const auto& [fr, bwt] : rows) {
    const auto m = forgetting_metrics(1.0, fr);
    CHECK(std::abs(m.bwt - bwt) <= 0.005);
  }
}

TEST_CASE("retention method validation") {
  CHECK_THROWS_AS(RetentionMethod::lwf(-1.0).validate(), ConfigError);
  CHECK_THROWS_AS(RetentionMethod::er(8, 1.5).validate(), ConfigError);
  CHECK_THROWS_AS(RetentionMethod::er(0).validate(), ConfigError);
  CHECK(parse_retention_kind("ewc") == RetentionMethod::Kind::EWC);
  CHECK_FALSE(parse_retention_kind("si").has_value());
}

}  // TEST_SUITE

TEST_SUITE("metrics") {

using V = std::vector<double>;

TEST_CASE("rmse and mae") {
  CHECK(rmse(V{1.0, 2.0}, V{3.0, 2.0}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(mae(V{1.0, 2.0}, V{3.0, 2.0}) == 1.0);
  CHECK(rmse(V{4.0, 5.0}, V{4.0, 5.0}) == 0.0);
  CHECK(rmse(V{4.0, 5.0, 6.0}, V{1.5, 2.5, 3.5}) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK_THROWS_AS(rmse(V{1.0}, V{1.0, 2.0}), ShapeError);
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> p(10), t(10);
    for (auto& v : p) v = rng.uniform(-5, 5);
    for (auto& v : t) v = rng.uniform(-5, 5);
    CHECK(mae(p, t) <= rmse(p, t) + 1e-15);
  }
}

TEST_CASE("pearson") {
  // r = cov / (sd_p sd_t) for [1,2,3] vs [1,2,4]: 3 / sqrt(2 * 14/3).
  const double expected = 3.0 / std::sqrt(2.0 * 14.0 / 3.0);
  CHECK(expected == doctest::Approx(0.9819).epsilon(1e-4));
  CHECK(pearson(V{1.0, 2.0, 3.0}, V{1.0, 2.0, 4.0}) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(pearson(V{1.0, 5.0, 2.0}, V{1.0, 5.0, 2.0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson(V{-1.0, 0.0, 1.0}, V{1.0, 0.0, -1.0}) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(pearson(V{2.0, 2.0}, V{1.0, 3.0}), DomainError);
}

}  // TEST_SUITE
