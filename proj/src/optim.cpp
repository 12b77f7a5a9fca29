#include "glumind/optim.hpp"

#include "glumind/errors.hpp"

#include <cmath>

namespace glumind {

void adamw_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, const AdamWConfig& cfg, long step) {
  if (cfg.lr <= 0.0) throw ContractError("AdamW learning rate must be positive");
  if (step < 1) throw ContractError("AdamW step counter is 1-based");
  param -= cfg.lr * cfg.weight_decay * param;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  param.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
}

void AdamW::step(ParamStore& params) {
  ++step_;
  for (auto& [name, t] : params) {
    auto it = state_.find(name);
    if (it == state_.end()) {
      it = state_.emplace(name, Moments{Matrix::Zero(t.data.rows(), t.data.cols()),
                                        Matrix::Zero(t.data.rows(), t.data.cols())})
               .first;
    }
    if (t.grad && t.grad->size() == t.data.size()) {
      adamw_update(t.data, *t.grad, it->second.m, it->second.v, cfg_, step_);
    } else {
      const Matrix zero = Matrix::Zero(t.data.rows(), t.data.cols());
      adamw_update(t.data, zero, it->second.m, it->second.v, cfg_, step_);
    }
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, t] : params) {
    if (t.grad) sq += t.grad->squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [_, t] : params) {
      if (t.grad) *t.grad *= s;
    }
  }
  return norm;
}

}  // namespace glumind
