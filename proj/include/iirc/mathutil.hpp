#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace iirc {

/// Numerically stable logistic; never overflows for any finite input.
inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow for large |x|.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;  // all -inf (or empty): sum is 0
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// softmax(v / temperature), stable via max subtraction.
inline std::vector<double> softmax(const std::vector<double>& v, double temperature = 1.0) {
  std::vector<double> out(v.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x / temperature);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] / temperature - m);
    s += out[i];
  }
  for (double& x : out) x /= s;
  return out;
}

inline double squared_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double l2_norm(const std::vector<double>& v) { return std::sqrt(squared_norm(v)); }

}  // namespace iirc
