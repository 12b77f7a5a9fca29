#include "glumind/model.hpp"

#include "glumind/errors.hpp"
#include "glumind/kernels.hpp"
#include "glumind/rng.hpp"

#include <cmath>

namespace glumind {

namespace {

constexpr std::array<std::string_view, 4> kVariantNames = {"full", "cross_only", "multiscale_only", "plain_mha"};
constexpr Index kPredictChunk = 32;

std::string embed_name(Modality m, std::string_view part) {
  return "embed." + std::string(modality_name(m)) + "." + std::string(part);
}

struct Initializer {
  ParamStore& store;
  std::uint64_t seed;

  void uniform(const std::string& name, std::vector<Index> shape, Index fan_in) {
    Tensor t(std::move(shape));
    Rng rng(seed ^ stable_hash(name));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = rng.uniform(-bound, bound);
    store.add(name, std::move(t));
  }

  void constant(const std::string& name, Index n, double value) {
    Tensor t({n});
    t.data.setConstant(value);
    store.add(name, std::move(t));
  }

  void attention(const std::string& prefix, Index d) {
    for (const char* w : {"wq", "wk", "wv", "wh"}) uniform(prefix + "." + w, {d, d}, d);
  }

  void ff_norm(const std::string& prefix, Index d, Index hidden) {
    uniform(prefix + ".ff.w1", {d, hidden}, d);
    uniform(prefix + ".ff.b1", {hidden}, d);
    uniform(prefix + ".ff.w2", {hidden, d}, hidden);
    uniform(prefix + ".ff.b2", {d}, hidden);
    constant(prefix + ".norm.gain", d, 1.0);
    constant(prefix + ".norm.bias", d, 0.0);
  }
};

/// Resamples an aux window onto the glucose grid and pads/truncates to T.
std::vector<double> align_to_history(Modality m, const AuxWindow& w, Index history) {
  SignalSeries s;
  s.modality = m;
  s.period_min = w.period_min;
  s.values = w.values;
  std::vector<double> v = resample_to_grid(s, kGlucosePeriod).values;
  v.resize(static_cast<std::size_t>(history), v.back());
  return v;
}

const AuxWindow& aux_window(const WindowSample& sample, Modality m) {
  auto it = sample.aux_windows.find(m);
  if (it == sample.aux_windows.end()) {
    throw ConfigError("window lacks auxiliary modality '" + std::string(modality_name(m)) +
                      "' required by the model configuration");
  }
  return it->second;
}

}  // namespace

std::string_view variant_name(Variant v) { return kVariantNames[static_cast<std::size_t>(v)]; }

std::optional<Variant> parse_variant(std::string_view name) {
  for (std::size_t i = 0; i < kVariantNames.size(); ++i) {
    if (kVariantNames[i] == name) return static_cast<Variant>(i);
  }
  return std::nullopt;
}

std::string layer_prefix(int layer) { return layer == 0 ? std::string() : "layer" + std::to_string(layer) + "."; }

void ModelConfig::validate() const {
  if (d_model < 1 || heads < 1 || d_model % heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be a positive multiple of heads (" +
                      std::to_string(heads) + ")");
  }
  if (history < 1 || horizon < 1 || ff_hidden < 1 || layers < 1) {
    throw ConfigError("history, horizon, ff_hidden and layers must be >= 1");
  }
  if (uses_multiscale() && history < kScales.back()) {
    throw ConfigError("multi-scale attention needs history >= 4, got " + std::to_string(history));
  }
  if (variant == Variant::CrossOnly && n_aux() == 0) {
    throw ConfigError("cross-attention variant needs at least one auxiliary signal");
  }
  if (max_len < history) throw ConfigError("positional table shorter than the history window");
  if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");
  for (Modality m : aux_modalities) {
    if (m == Modality::Glucose) throw ConfigError("glucose cannot be an auxiliary modality");
  }
}

// ---- init -----------------------------------------------------------------

GluMindModel::GluMindModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const Index d = config_.d_model;
  const Index f = config_.ff_hidden;
  Initializer init{params_, config_.seed};

  std::vector<Modality> embedded{Modality::Glucose};
  embedded.insert(embedded.end(), config_.aux_modalities.begin(), config_.aux_modalities.end());
  for (Modality m : embedded) {
    init.uniform(embed_name(m, "weight"), {1, d}, 1);
    init.uniform(embed_name(m, "bias"), {d}, 1);
  }
  if (config_.uses_fusion()) {
    const Index in = (config_.n_aux() + 1) * d;
    init.uniform("fuse.weight", {in, d}, in);
    init.uniform("fuse.bias", {d}, in);
  }
  for (int l = 0; l < config_.layers; ++l) {
    const std::string p = layer_prefix(l);
    if (config_.uses_cross()) {
      for (Index i = 0; i < config_.n_aux(); ++i) init.attention(p + "ca.branch" + std::to_string(i), d);
      init.ff_norm(p + "ca", d, f);
    }
    if (config_.uses_multiscale()) {
      for (int s : kScales) init.attention(p + "ms.scale" + std::to_string(s), d);
      init.ff_norm(p + "ms", d, f);
    }
    if (config_.variant == Variant::PlainMHA) {
      init.attention(p + "mha", d);
      init.ff_norm(p + "mha", d, f);
    }
    init.ff_norm(p + "out", d, f);
  }
  const Index flat = config_.history * d;
  init.uniform("head.weight", {flat, config_.horizon}, flat);
  init.uniform("head.bias", {config_.horizon}, flat);

  pos_table_ = kernels::sinusoidal_table(config_.max_len, d);
}

GluMindModel::GluMindModel(ModelConfig config, ParamStore params) : GluMindModel(std::move(config)) {
  if (!params_.same_layout(params)) {
    throw CompatibilityError("parameter store does not match the model configuration");
  }
  params_ = std::move(params);
}

GluMindModel init_params(const ModelConfig& config) { return GluMindModel(config); }

// ---- blocks ----------------------------------------------------------------

AttentionWeights AttentionWeights::bind(const ParamBinding& b, std::string_view prefix) {
  const std::string p(prefix);
  return {b[p + ".wq"], b[p + ".wk"], b[p + ".wv"], b[p + ".wh"]};
}

FeedForwardNorm FeedForwardNorm::bind(const ParamBinding& b, std::string_view prefix) {
  const std::string p(prefix);
  return {b[p + ".ff.w1"], b[p + ".ff.b1"], b[p + ".ff.w2"],
          b[p + ".ff.b2"], b[p + ".norm.gain"], b[p + ".norm.bias"]};
}

Var embed_and_encode(const ParamBinding& b, const Matrix& pos_table, Modality modality, std::span<const double> x) {
  const auto t = static_cast<Index>(x.size());
  if (t < 1) throw ShapeError("cannot embed an empty window");
  if (t > pos_table.rows()) {
    throw ConfigError("window of " + std::to_string(t) + " samples exceeds positional capacity " +
                      std::to_string(pos_table.rows()));
  }
  Tape& tape = b.tape();
  Var input = tape.constant(Eigen::Map<const Matrix>(x.data(), t, 1));
  Var lifted = add_row(matmul(input, b[embed_name(modality, "weight")]), b[embed_name(modality, "bias")]);
  return add(lifted, tape.constant(pos_table.topRows(t)));
}

Var scaled_attention(Var q, Var k, Var v, double d_model) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: query width " + std::to_string(q.cols()) + " != key width " + std::to_string(k.cols()));
  }
  if (k.rows() != v.rows()) throw ShapeError("attention: key and value lengths differ");
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(d_model));
  return matmul(softmax_rows(scores), v);
}

Var multi_head(Var x_q, Var x_kv, const AttentionWeights& w, Index heads) {
  const Index d = w.wq.cols();
  if (d % heads != 0) throw ShapeError("d_model not divisible by head count");
  const Index dh = d / heads;
  Var q = matmul(x_q, w.wq);
  Var k = matmul(x_kv, w.wk);
  Var v = matmul(x_kv, w.wv);
  std::vector<Var> per_head;
  per_head.reserve(static_cast<std::size_t>(heads));
  for (Index h = 0; h < heads; ++h) {
    per_head.push_back(scaled_attention(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh),
                                        slice_cols(v, h * dh, dh), static_cast<double>(d)));
  }
  Var joined = heads == 1 ? per_head.front() : concat_cols(per_head);
  return matmul(joined, w.wh);
}

Var feed_forward_add_norm(Var x, const FeedForwardNorm& w, double eps) {
  Var hidden = gelu(add_row(matmul(x, w.w1), w.b1));
  Var ff = add_row(matmul(hidden, w.w2), w.b2);
  return layer_norm(add(x, ff), w.gain, w.bias, eps);
}

Var cross_attention_branch(const ParamBinding& b, const ModelConfig& cfg, Var x_g, std::span<const Var> aux,
                           std::string_view prefix) {
  if (aux.empty()) throw ConfigError("cross-attention branch needs at least one auxiliary signal");
  if (static_cast<Index>(aux.size()) != cfg.n_aux()) {
    throw ConfigError("cross-attention got " + std::to_string(aux.size()) + " aux signals, config expects " +
                      std::to_string(cfg.n_aux()));
  }
  const std::string p(prefix);
  Var acc = multi_head(x_g, aux[0], AttentionWeights::bind(b, p + "ca.branch0"), cfg.heads);
  for (std::size_t i = 1; i < aux.size(); ++i) {
    acc = add(acc, multi_head(x_g, aux[i], AttentionWeights::bind(b, p + "ca.branch" + std::to_string(i)), cfg.heads));
  }
  return feed_forward_add_norm(acc, FeedForwardNorm::bind(b, p + "ca"), cfg.norm_eps);
}

Var fuse_inputs(const ParamBinding& b, const ModelConfig& cfg, const Matrix& pos_table, Var x_g,
                const WindowSample& sample) {
  std::vector<Var> parts{x_g};
  for (Modality m : cfg.aux_modalities) {
    const std::vector<double> aligned = align_to_history(m, aux_window(sample, m), cfg.history);
    parts.push_back(embed_and_encode(b, pos_table, m, aligned));
  }
  Var joined = parts.size() == 1 ? x_g : concat_cols(parts);
  return add_row(matmul(joined, b["fuse.weight"]), b["fuse.bias"]);
}

Var multi_scale_branch(const ParamBinding& b, const ModelConfig& cfg, Var x_i, std::string_view prefix) {
  const Index t = x_i.rows();
  if (t < kScales.back()) throw ConfigError("multi-scale branch needs T >= 4, got " + std::to_string(t));
  const std::string p(prefix);
  Var acc;
  bool first = true;
  for (int s : kScales) {
    const AttentionWeights w = AttentionWeights::bind(b, p + "ms.scale" + std::to_string(s));
    Var out;
    if (s == 1) {
      out = multi_head(x_i, x_i, w, cfg.heads);
    } else {
      Var pooled = mean_pool_time(x_i, s);
      out = repeat_upsample(multi_head(pooled, pooled, w, cfg.heads), s, t);
    }
    acc = first ? out : add(acc, out);
    first = false;
  }
  return feed_forward_add_norm(acc, FeedForwardNorm::bind(b, p + "ms"), cfg.norm_eps);
}

// ---- forward ---------------------------------------------------------------

Var GluMindModel::forward(const ParamBinding& b, const WindowSample& sample) const {
  const ModelConfig& cfg = config_;
  if (static_cast<Index>(sample.target_history.size()) != cfg.history) {
    throw ShapeError("window history has " + std::to_string(sample.target_history.size()) + " samples, model expects " +
                     std::to_string(cfg.history));
  }
  Var x_g = embed_and_encode(b, pos_table_, Modality::Glucose, sample.target_history);

  std::vector<Var> aux;
  if (cfg.uses_cross()) {
    for (Modality m : cfg.aux_modalities) aux.push_back(embed_and_encode(b, pos_table_, m, aux_window(sample, m).values));
  } else {
    for (Modality m : cfg.aux_modalities) (void)aux_window(sample, m);
  }
  Var x_i = cfg.uses_fusion() ? fuse_inputs(b, cfg, pos_table_, x_g, sample) : x_g;

  Var y;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    Var mixed;
    switch (cfg.variant) {
      case Variant::Full:
        mixed = multi_scale_branch(b, cfg, x_i, p);
        if (cfg.uses_cross()) mixed = add(cross_attention_branch(b, cfg, x_g, aux, p), mixed);
        break;
      case Variant::CrossOnly:
        mixed = cross_attention_branch(b, cfg, x_g, aux, p);
        break;
      case Variant::MultiScaleOnly:
        mixed = multi_scale_branch(b, cfg, x_i, p);
        break;
      case Variant::PlainMHA:
        mixed = feed_forward_add_norm(multi_head(x_i, x_i, AttentionWeights::bind(b, p + "mha"), cfg.heads),
                                      FeedForwardNorm::bind(b, p + "mha"), cfg.norm_eps);
        break;
    }
    y = feed_forward_add_norm(mixed, FeedForwardNorm::bind(b, p + "out"), cfg.norm_eps);
    x_g = y;
    x_i = y;
  }
  return add_row(matmul(flatten(y), b["head.weight"]), b["head.bias"]);
}

std::vector<std::vector<double>> GluMindModel::predict(std::span<const WindowSample> samples) const {
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (std::size_t begin = 0; begin < samples.size(); begin += kPredictChunk) {
    Tape tape(false);
    ParamBinding binding(tape, params_);
    const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(kPredictChunk));
    for (std::size_t i = begin; i < end; ++i) {
      const Matrix& v = forward(binding, samples[i]).value();
      out.emplace_back(v.data(), v.data() + v.size());
    }
  }
  return out;
}

std::vector<double> GluMindModel::predict(const WindowSample& sample) const {
  return predict(std::span<const WindowSample>(&sample, 1)).front();
}

}  // namespace glumind
