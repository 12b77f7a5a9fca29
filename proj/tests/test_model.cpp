#include "glumind/errors.hpp"
#include "glumind/kernels.hpp"
#include "glumind/model.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace glumind;
using testutil::oracle_attention;
using testutil::random_matrix;

namespace {

ModelConfig small_config(Variant v = Variant::Full, std::vector<Modality> aux = {Modality::HeartRate, Modality::Stress}) {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.history = 8;
  cfg.horizon = 2;
  cfg.ff_hidden = 16;
  cfg.aux_modalities = std::move(aux);
  cfg.variant = v;
  cfg.seed = 17;
  cfg.max_len = 64;
  return cfg;
}

Matrix value_of(const GluMindModel& model, const WindowSample& w) {
  Tape tape(false);
  ParamBinding b(tape, model.params());
  return model.forward(b, w).value();
}

void zero_prefix(ParamStore& ps, const std::string& prefix) {
  for (auto& [name, t] : ps) {
    if (name.rfind(prefix, 0) == 0) t.data.setZero();
  }
}

/// Copies every parameter `into` has from `from`.
ParamStore restrict_to(const ParamStore& from, const ParamStore& layout) {
  ParamStore out;
  for (const auto& [name, t] : layout) out.add(name, from.at(name));
  return out;
}

Index attention_count(Index d) { return 4 * d * d; }
Index ffn_count(Index d, Index f) { return d * f + f + f * d + d + 2 * d; }

}  // namespace

TEST_SUITE("model") {

TEST_CASE("scaled_attention hand examples") {
  Tape tape;
  const Matrix eye = Matrix::Identity(2, 2);
  const Matrix out = scaled_attention(tape.constant(eye), tape.constant(eye), tape.constant(eye), 2.0).value();
  const double w = std::exp(1.0 / std::sqrt(2.0)) / (std::exp(1.0 / std::sqrt(2.0)) + 1.0);
  CHECK(w == doctest::Approx(0.6698).epsilon(1e-4));
  CHECK(std::abs(out(0, 0) - w) <= 1e-14);
  CHECK(std::abs(out(0, 1) - (1.0 - w)) <= 1e-14);
  CHECK(std::abs(out(1, 1) - w) <= 1e-14);

  Rng rng(2);
  const Matrix q = random_matrix(rng, 5, 3);
  const Matrix k1 = random_matrix(rng, 1, 3);
  const Matrix v1 = random_matrix(rng, 1, 4);
  const Matrix single = scaled_attention(tape.constant(q), tape.constant(k1), tape.constant(v1), 3.0).value();
  for (Index r = 0; r < 5; ++r) CHECK((single.row(r) - v1.row(0)).cwiseAbs().maxCoeff() <= 1e-15);

  const Matrix v = random_matrix(rng, 3, 2);
  const Matrix uniform =
      scaled_attention(tape.constant(Matrix::Zero(4, 3)), tape.constant(random_matrix(rng, 3, 3)), tape.constant(v), 3.0)
          .value();
  for (Index r = 0; r < 4; ++r) CHECK((uniform.row(r) - v.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-15);

  CHECK_THROWS_AS(scaled_attention(tape.constant(q), tape.constant(random_matrix(rng, 2, 2)), tape.constant(v), 3.0),
                  ShapeError);
}

TEST_CASE("scaled_attention matches the scalar oracle on random inputs") {
  Rng rng(13);
  Tape tape;
  for (int trial = 0; trial < 50; ++trial) {
    const Index a = 1 + rng.below(6), b = 1 + rng.below(6), d = 1 + rng.below(4);
    const Matrix q = random_matrix(rng, a, d, -3, 3), k = random_matrix(rng, b, d, -3, 3), v = random_matrix(rng, b, d);
    const Matrix got = scaled_attention(tape.constant(q), tape.constant(k), tape.constant(v), 8.0).value();
    CHECK((got - oracle_attention(q, k, v, 8.0)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("multi_head against per-head oracle") {
  Rng rng(4);
  const Index d = 6;
  ParamStore ps;
  for (const char* n : {"w.wq", "w.wk", "w.wv", "w.wh"}) ps.add(n, Tensor({d, d}, random_matrix(rng, d, d)));
  const Matrix xq = random_matrix(rng, 5, d), xkv = random_matrix(rng, 9, d);
  for (Index heads : {1, 2, 3}) {
    Tape tape;
    ParamBinding b(tape, ps);
    const Matrix got =
        multi_head(tape.constant(xq), tape.constant(xkv), AttentionWeights::bind(b, "w"), heads).value();
    CHECK(got.rows() == 5);
    const Matrix q = xq * ps.at("w.wq").data, k = xkv * ps.at("w.wk").data, v = xkv * ps.at("w.wv").data;
    const Index dh = d / heads;
    Matrix joined(5, d);
    for (Index h = 0; h < heads; ++h) {
      joined.middleCols(h * dh, dh) =
          oracle_attention(q.middleCols(h * dh, dh), k.middleCols(h * dh, dh), v.middleCols(h * dh, dh), double(d));
    }
    CHECK((got - joined * ps.at("w.wh").data).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("key/value permutation invariance and V linearity") {
  Rng rng(6);
  const Index d = 4;
  ParamStore ps;
  for (const char* n : {"w.wq", "w.wk", "w.wv", "w.wh"}) ps.add(n, Tensor({d, d}, random_matrix(rng, d, d)));
  const Matrix xq = random_matrix(rng, 6, d), xkv = random_matrix(rng, 10, d);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(10);
  perm.setIdentity();
  for (Index i = 9; i > 0; --i) std::swap(perm.indices()[i], perm.indices()[static_cast<Index>(rng.below(i + 1))]);

  Tape tape;
  ParamBinding b(tape, ps);
  const auto w = AttentionWeights::bind(b, "w");
  const Matrix base = multi_head(tape.constant(xq), tape.constant(xkv), w, 2).value();
  const Matrix permuted = multi_head(tape.constant(xq), tape.constant(perm * xkv), w, 2).value();
  CHECK((base - permuted).cwiseAbs().maxCoeff() <= 1e-12);

  ParamStore doubled = ps;
  doubled.at("w.wv").data *= 2.0;
  Tape t2;
  ParamBinding b2(t2, doubled);
  const Matrix twice = multi_head(t2.constant(xq), t2.constant(xkv), AttentionWeights::bind(b2, "w"), 2).value();
  CHECK((twice - 2.0 * base).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("cross attention returns query length for any aux length") {
  const std::vector<Modality> aux{Modality::WalkSteps, Modality::HeartRate, Modality::Stress};
  ModelConfig cfg = small_config(Variant::Full, aux);
  cfg.history = 80;
  cfg.max_len = 512;
  GluMindModel model(cfg);
  Tape tape(false);
  ParamBinding b(tape, model.params());
  Rng rng(1);
  std::vector<Var> embedded;
  for (Modality m : aux) {
    const auto n = aux_window_length(80, native_period(m));
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    embedded.push_back(embed_and_encode(b, model.positional_table(), m, x));
  }
  CHECK(embedded[0].rows() == 400);
  CHECK(embedded[1].rows() == 400);
  CHECK(embedded[2].rows() == 133);
  std::vector<double> g(80, 0.5);
  Var x_g = embed_and_encode(b, model.positional_table(), Modality::Glucose, g);
  const Var out = cross_attention_branch(b, cfg, x_g, embedded);
  CHECK(out.rows() == 80);
  CHECK(out.cols() == cfg.d_model);
}

TEST_CASE("embed_and_encode") {
  ModelConfig cfg = small_config();
  cfg.max_len = 400;
  GluMindModel model(cfg);
  ParamStore ps = model.params();
  zero_prefix(ps, "embed.glucose.bias");
  Tape tape(false);
  ParamBinding b(tape, ps);
  for (std::size_t t : {16u, 80u, 400u}) {
    const std::vector<double> zeros(t, 0.0);
    const Matrix out = embed_and_encode(b, model.positional_table(), Modality::Glucose, zeros).value();
    CHECK(out.rows() == static_cast<Index>(t));
    CHECK(out == model.positional_table().topRows(static_cast<Index>(t)));
  }
  const std::vector<double> too_long(401, 0.0);
  CHECK_THROWS_AS(embed_and_encode(b, model.positional_table(), Modality::Glucose, too_long), ConfigError);

  // Shorter signals see the prefix of the same table.
  const Matrix table = kernels::sinusoidal_table(64, 8);
  CHECK(kernels::sinusoidal_table(16, 8) == table.topRows(16));
  CHECK(table(0, 0) == 0.0);
  CHECK(table(0, 1) == 1.0);
  CHECK(table(3, 0) == doctest::Approx(std::sin(3.0)));
}

TEST_CASE("multi-scale branch on alternating rows") {
  ModelConfig cfg = small_config(Variant::MultiScaleOnly, {});
  GluMindModel model(cfg);
  Rng rng(12);
  const Matrix a = random_matrix(rng, 1, 8), bb = random_matrix(rng, 1, 8);
  Matrix x(8, 8);
  for (Index r = 0; r < 8; ++r) x.row(r) = r % 2 == 0 ? a : bb;
  const Matrix pooled = kernels::mean_pool_time(x, 2);
  for (Index r = 0; r < pooled.rows(); ++r) CHECK((pooled.row(r) - (a + bb) / 2.0).cwiseAbs().maxCoeff() <= 1e-15);

  // Branch-2 attention over a constant sequence returns a constant sequence.
  Tape tape(false);
  ParamBinding b(tape, model.params());
  const auto w = AttentionWeights::bind(b, "ms.scale2");
  const Matrix out = repeat_upsample(multi_head(tape.constant(pooled), tape.constant(pooled), w, 2), 2, 8).value();
  for (Index r = 1; r < 8; ++r) CHECK((out.row(r) - out.row(0)).cwiseAbs().maxCoeff() <= 1e-12);

  Tape t2(false);
  ParamBinding b2(t2, model.params());
  CHECK_THROWS_AS(multi_scale_branch(b2, cfg, t2.constant(Matrix::Zero(3, 8))), ConfigError);
}

TEST_CASE("parameter count closed form") {
  const Index d = 64, h = 4, n = 3, t = 80, m = 12, f = 128;
  ModelConfig cfg;
  cfg.d_model = d;
  cfg.heads = h;
  cfg.history = t;
  cfg.horizon = m;
  cfg.ff_hidden = f;
  cfg.aux_modalities = {Modality::WalkSteps, Modality::Stress, Modality::HeartRate};
  const Index embeds = (n + 1) * 2 * d;
  const Index fuse = (n + 1) * d * d + d;
  const Index cross = n * attention_count(d) + ffn_count(d, f);
  const Index multi = 3 * attention_count(d) + ffn_count(d, f);
  const Index out = ffn_count(d, f);
  const Index head = t * d * m + m;
  CHECK(GluMindModel(cfg).params().parameter_count() == embeds + fuse + cross + multi + out + head);

  cfg.variant = Variant::CrossOnly;
  CHECK(GluMindModel(cfg).params().parameter_count() == embeds + cross + out + head);
  cfg.variant = Variant::PlainMHA;
  CHECK(GluMindModel(cfg).params().parameter_count() ==
        embeds + fuse + attention_count(d) + ffn_count(d, f) + out + head);
}

TEST_CASE("initialization is seeded and bounded") {
  const ModelConfig cfg = small_config();
  GluMindModel a(cfg), b(cfg);
  CHECK(a.params().same_values(b.params()));
  ModelConfig other = cfg;
  other.seed = 18;
  CHECK_FALSE(GluMindModel(other).params().same_values(a.params()));

  for (const auto& [name, t] : a.params()) {
    if (name.find(".norm.") != std::string::npos) continue;  // gain 1, bias 0
    Index fan_in = t.shape.size() == 2 ? t.shape[0] : 0;
    if (name.ends_with("bias") || name.ends_with(".b1") || name.ends_with(".b2")) {
      const std::string weight = name.ends_with(".b1")   ? name.substr(0, name.size() - 2) + "w1"
                                 : name.ends_with(".b2") ? name.substr(0, name.size() - 2) + "w2"
                                                         : name.substr(0, name.size() - 4) + "weight";
      fan_in = a.params().at(weight).shape[0];
    }
    REQUIRE(fan_in > 0);
    INFO(name);
    CHECK(t.data.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(static_cast<double>(fan_in)));
  }
}

TEST_CASE("forward shapes and modality checks") {
  ModelConfig cfg = small_config();
  cfg.horizon = 1;
  GluMindModel one(cfg);
  CHECK(one.predict(testutil::random_window(cfg, 1)).size() == 1);

  cfg.history = 80;
  cfg.horizon = 12;
  cfg.max_len = 512;
  cfg.aux_modalities = {Modality::WalkSteps, Modality::Stress, Modality::HeartRate};
  GluMindModel big(cfg);
  const auto w = testutil::random_window(cfg, 2);
  CHECK(big.predict(w).size() == 12);

  auto missing = w;
  missing.aux_windows.erase(Modality::Stress);
  try {
    (void)big.predict(missing);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("stress") != std::string::npos);
  }
  CHECK_THROWS_AS(GluMindModel(small_config(Variant::CrossOnly, {})), ConfigError);
}

TEST_CASE("variant equivalences") {
  const ModelConfig full_cfg = small_config(Variant::Full);
  GluMindModel full(full_cfg);
  const auto w = testutil::random_window(full_cfg, 5);

  ParamStore no_cross = full.params();
  zero_prefix(no_cross, "ca.");
  GluMindModel ms_only(small_config(Variant::MultiScaleOnly));
  ms_only.params() = restrict_to(full.params(), ms_only.params());
  CHECK(value_of(GluMindModel(full_cfg, no_cross), w) == value_of(ms_only, w));

  ParamStore no_ms = full.params();
  zero_prefix(no_ms, "ms.");
  GluMindModel cross_only(small_config(Variant::CrossOnly));
  cross_only.params() = restrict_to(full.params(), cross_only.params());
  CHECK(value_of(GluMindModel(full_cfg, no_ms), w) == value_of(cross_only, w));

  // With no aux signal the cross branch disappears and Full is the multi-scale model.
  GluMindModel bg_full(small_config(Variant::Full, {}));
  GluMindModel bg_ms(small_config(Variant::MultiScaleOnly, {}));
  const auto bg_window = testutil::random_window(small_config(Variant::Full, {}), 3);
  CHECK(value_of(bg_full, bg_window) == value_of(bg_ms, bg_window));
}

TEST_CASE("forward is deterministic and tape-independent") {
  const ModelConfig cfg = small_config();
  GluMindModel model(cfg);
  const auto w = testutil::random_window(cfg, 8);
  Tape rec(true);
  ParamBinding b(rec, model.params());
  const Matrix recorded = model.forward(b, w).value();
  CHECK(recorded == value_of(model, w));
  const std::vector<WindowSample> batch{w, testutil::random_window(cfg, 9), w};
  const auto preds = model.predict(batch);
  CHECK(preds[0] == preds[2]);
  CHECK(preds[0] == model.predict(w));
}

TEST_CASE("stacked layers use their own parameters") {
  ModelConfig cfg = small_config();
  cfg.layers = 2;
  GluMindModel model(cfg);
  CHECK(model.params().contains("layer1.ms.scale1.wq"));
  CHECK(model.params().contains("layer1.out.norm.gain"));
  CHECK(model.predict(testutil::random_window(cfg, 4)).size() == 2);
}

}  // TEST_SUITE
