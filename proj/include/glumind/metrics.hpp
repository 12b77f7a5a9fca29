#pragma once

#include "glumind/errors.hpp"

#include <cmath>
#include <span>
#include <string>

namespace glumind {

namespace detail {
template <typename Scalar>
void require_pair(std::span<const Scalar> pred, std::span<const Scalar> truth, const char* what) {
  if (pred.size() != truth.size()) {
    throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(pred.size()) + " vs " +
                     std::to_string(truth.size()));
  }
  if (pred.empty()) throw ShapeError(std::string(what) + ": empty input");
}
}  // namespace detail

template <typename Scalar>
Scalar rmse(std::span<const Scalar> pred, std::span<const Scalar> truth) {
  detail::require_pair(pred, truth, "rmse");
  Scalar acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(acc / static_cast<Scalar>(pred.size()));
}

template <typename Scalar>
Scalar mae(std::span<const Scalar> pred, std::span<const Scalar> truth) {
  detail::require_pair(pred, truth, "mae");
  Scalar acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<Scalar>(pred.size());
}

/// Sample Pearson correlation; throws DomainError when either side is constant.
template <typename Scalar>
Scalar pearson(std::span<const Scalar> pred, std::span<const Scalar> truth) {
  detail::require_pair(pred, truth, "pearson");
  const auto n = static_cast<Scalar>(pred.size());
  Scalar mp = 0, mt = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mp += pred[i];
    mt += truth[i];
  }
  mp /= n;
  mt /= n;
  Scalar cov = 0, vp = 0, vt = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Scalar dp = pred[i] - mp;
    const Scalar dt = truth[i] - mt;
    cov += dp * dt;
    vp += dp * dp;
    vt += dt * dt;
  }
  if (vp == 0 || vt == 0) throw DomainError("pearson correlation undefined for zero-variance input");
  const Scalar r = cov / std::sqrt(vp * vt);
  return std::max(Scalar(-1), std::min(Scalar(1), r));
}

// Non-template overloads so vectors and arrays convert without naming the scalar type.
double rmse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);
double pearson(std::span<const double> pred, std::span<const double> truth);

}  // namespace glumind
