#include "glumind/metrics.hpp"

namespace glumind {

double rmse(std::span<const double> pred, std::span<const double> truth) { return rmse<double>(pred, truth); }
double mae(std::span<const double> pred, std::span<const double> truth) { return mae<double>(pred, truth); }
double pearson(std::span<const double> pred, std::span<const double> truth) { return pearson<double>(pred, truth); }

}  // namespace glumind
