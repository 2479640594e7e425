#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace geoloc {

struct GradCheckReport {
  std::vector<double> analytic;
  std::vector<double> numeric;
  std::vector<double> relative_error;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Compares an analytic gradient with central differences of f at x.
/// Relative error is |a - n| / max(|a| + |n|, floor); the floor keeps
/// entries whose true gradient is ~0 from dividing rounding noise by zero.
inline GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                                  const std::vector<double>& analytic_gradient, std::vector<double> x,
                                  double tolerance, double step = 1e-5, double floor = 1e-6) {
  GradCheckReport r;
  r.analytic = analytic_gradient;
  r.numeric.resize(x.size());
  r.relative_error.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    r.numeric[i] = (up - down) / (2.0 * step);
    const double a = analytic_gradient.at(i), n = r.numeric[i];
    r.relative_error[i] = std::abs(a - n) / std::max(std::abs(a) + std::abs(n), floor);
    if (r.relative_error[i] > r.max_relative_error) {
      r.max_relative_error = r.relative_error[i];
      r.worst_index = i;
    }
  }
  r.passed = r.max_relative_error < tolerance;
  return r;
}

}  // namespace geoloc
