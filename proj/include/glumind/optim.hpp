#pragma once

#include "glumind/tensor.hpp"

#include <map>
#include <string>

namespace glumind {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay and bias-corrected moments.
///
/// Per parameter, at step k:
///   p <- p - lr * wd * p
///   m <- b1 m + (1 - b1) g,   v <- b2 v + (1 - b2) g^2
///   p <- p - lr * (m / (1 - b1^k)) / (sqrt(v / (1 - b2^k)) + eps)
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update using Tensor::grad of every parameter (missing grads count as zero).
  void step(ParamStore& params);

  [[nodiscard]] long steps_taken() const { return step_; }
  [[nodiscard]] const AdamWConfig& config() const { return cfg_; }

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  AdamWConfig cfg_;
  long step_ = 0;
  std::map<std::string, Moments, std::less<>> state_;
};

/// Single stateless-style update on explicit moment buffers; `step` is 1-based.
void adamw_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, const AdamWConfig& cfg, long step);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace glumind
