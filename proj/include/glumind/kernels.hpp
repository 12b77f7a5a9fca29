#pragma once

// Value-level kernels shared by the tape ops and by gradient-free inference.
// All of them accept arbitrary Eigen expressions.

#include "glumind/errors.hpp"
#include "glumind/tensor.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace glumind::kernels {

template <typename Derived>
using PlainOf = MatrixX<typename Derived::Scalar>;

/// Row-wise softmax with per-row max subtraction.
template <typename Derived>
PlainOf<Derived> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  PlainOf<Derived> y = x;
  for (Index r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return y;
}

/// Per-row standardization with population variance, then gain/bias.
template <typename Derived, typename G, typename B>
PlainOf<Derived> layer_norm(const Eigen::MatrixBase<Derived>& x, const Eigen::MatrixBase<G>& gain,
                            const Eigen::MatrixBase<B>& bias, typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  PlainOf<Derived> y(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mu = x.row(r).mean();
    const Scalar var = (x.row(r).array() - mu).square().mean();
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    y.row(r) = (((x.row(r).array() - mu) * inv) * gain.array() + bias.array()).matrix();
  }
  return y;
}

inline constexpr double kGeluC = 0.044715;

/// GELU, tanh approximation.
template <typename Derived>
PlainOf<Derived> gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar k = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  return x.unaryExpr([k](Scalar v) {
    return Scalar(0.5) * v * (Scalar(1) + std::tanh(k * (v + Scalar(kGeluC) * v * v * v)));
  });
}

template <typename Scalar>
Scalar gelu_derivative(Scalar v) {
  const Scalar k = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  const Scalar t = std::tanh(k * (v + Scalar(kGeluC) * v * v * v));
  return Scalar(0.5) * (Scalar(1) + t) +
         Scalar(0.5) * v * (Scalar(1) - t * t) * k * (Scalar(1) + Scalar(3 * kGeluC) * v * v);
}

inline void check_pool_factor(int factor) {
  if (factor != 1 && factor != 2 && factor != 4) {
    throw ConfigError("downsampling factor must be 1, 2 or 4, got " + std::to_string(factor));
  }
}

/// Averages consecutive groups of `factor` rows; a trailing partial group is
/// averaged over the rows it actually has.
template <typename Derived>
PlainOf<Derived> mean_pool_time(const Eigen::MatrixBase<Derived>& x, int factor) {
  check_pool_factor(factor);
  if (x.rows() < 1) throw ShapeError("mean_pool_time needs at least one row");
  const Index t = x.rows();
  const Index out_rows = (t + factor - 1) / factor;
  PlainOf<Derived> y(out_rows, x.cols());
  for (Index j = 0; j < out_rows; ++j) {
    const Index begin = j * factor;
    const Index count = std::min<Index>(factor, t - begin);
    y.row(j) = x.middleRows(begin, count).colwise().sum() / static_cast<typename Derived::Scalar>(count);
  }
  return y;
}

/// Repeats each row `factor` times and truncates to `target_len` rows.
template <typename Derived>
PlainOf<Derived> repeat_upsample(const Eigen::MatrixBase<Derived>& x, int factor, Index target_len) {
  if (factor < 1) throw ConfigError("upsampling factor must be >= 1");
  if (x.rows() * factor < target_len) {
    throw ShapeError("repeat_upsample: " + std::to_string(x.rows()) + " rows x factor " + std::to_string(factor) +
                     " cannot cover target length " + std::to_string(target_len));
  }
  PlainOf<Derived> y(target_len, x.cols());
  for (Index i = 0; i < target_len; ++i) y.row(i) = x.row(i / factor);
  return y;
}

/// Sinusoidal positional table, rows are positions.
template <typename Scalar = double>
MatrixX<Scalar> sinusoidal_table(Index max_len, Index d_model) {
  MatrixX<Scalar> pe(max_len, d_model);
  for (Index pos = 0; pos < max_len; ++pos) {
    for (Index i = 0; i < d_model; ++i) {
      const Index pair = i / 2;
      const Scalar angle = static_cast<Scalar>(pos) /
                           std::pow(Scalar(10000), Scalar(2 * pair) / static_cast<Scalar>(d_model));
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace glumind::kernels
