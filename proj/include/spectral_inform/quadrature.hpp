#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>

namespace spectral_inform::detail {

// 8-point Gauss-Legendre rule on [-1, 1].
inline constexpr std::array<double, 8> kGaussNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGaussWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066238592364, 0.3626837833783620,
    0.3626837833783620, 0.3137066238592364, 0.2223810344533745, 0.1012285362903763};

/// Density model on the segment touching an endpoint of a piece:
/// f(s) = f1 * (s / s1)^alpha, s = distance to the endpoint. Power-law edges
/// (square-root, quadratic, integrable blow-up) are reproduced exactly, which
/// a piecewise-linear interpolant cannot do as z approaches the edge.
struct EdgeModel {
  double f1 = 0.0;     // density at the first interior grid point
  double s1 = 0.0;     // its distance to the endpoint (segment length)
  double alpha = 1.0;  // fitted decay exponent
  bool linear = false; // fall back to linear interpolation f0 -> f1
  double f0 = 0.0;     // endpoint value used by the linear fallback

  double operator()(double s) const {
    if (linear) return f0 + (f1 - f0) * (s / s1);
    return f1 * std::pow(s / s1, alpha);
  }
};

inline EdgeModel fit_edge(double f0, double f1, double f2, double s1, double s2) {
  EdgeModel m;
  m.f1 = f1;
  m.s1 = s1;
  if (f1 > 0.0 && f2 > 0.0 && std::isfinite(f1) && std::isfinite(f2)) {
    m.alpha = std::clamp(std::log(f2 / f1) / std::log(s2 / s1), -0.95, 12.0);
  } else {
    m.linear = true;
    m.f0 = std::isfinite(f0) ? f0 : f1;
  }
  return m;
}

/// Integral over s in [0, s1] of model(s) * kernel(endpoint + direction * s),
/// graded geometrically toward s = 0 until the cells are far below `dist`, the
/// distance from the kernel singularity to the endpoint.
template <class Kernel>
double integrate_edge_segment(const EdgeModel& model, double endpoint, double direction, double dist,
                              Kernel&& kernel) {
  constexpr double q = 0.25;
  double total = 0.0;
  double hi = model.s1;
  const double stop = std::max(1e-4 * dist, 1e-300);
  int levels = 0;
  while ((hi > stop || levels < 4) && levels < 200) {
    const double lo = hi * q;
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    for (std::size_t k = 0; k < kGaussNodes.size(); ++k) {
      const double s = mid + half * kGaussNodes[k];
      total += kGaussWeights[k] * half * model(s) * kernel(endpoint + direction * s);
    }
    hi = lo;
    ++levels;
  }
  // Remaining sliver [0, hi]: kernel is constant there to ~1e-4 relative.
  double mass;
  if (model.linear)
    mass = hi * (model.f0 + 0.5 * (model.f1 - model.f0) * hi / model.s1);
  else
    mass = model.f1 * model.s1 * std::pow(hi / model.s1, model.alpha + 1.0) / (model.alpha + 1.0);
  total += mass * kernel(endpoint + direction * 0.5 * hi);
  return total;
}

/// Integral of a tabulated density (grid/values) against kernel(x), where the
/// kernel may be singular at `pole` (outside [grid.front(), grid.back()]).
/// Interior segments use linear interpolation with Gauss-Legendre; the two end
/// segments use fitted power-law models.
template <class Kernel>
double integrate_tabulated(std::span<const double> grid, std::span<const double> values,
                           double pole, Kernel&& kernel) {
  const std::size_t n = grid.size();
  double total = 0.0;
  for (std::size_t k = 1; k + 2 < n; ++k) {
    const double x0 = grid[k], x1 = grid[k + 1];
    const double f0 = values[k], f1 = values[k + 1];
    const double half = 0.5 * (x1 - x0), mid = 0.5 * (x1 + x0);
    double seg = 0.0;
    for (std::size_t g = 0; g < kGaussNodes.size(); ++g) {
      const double t = kGaussNodes[g];
      const double f = f0 + (f1 - f0) * 0.5 * (t + 1.0);
      seg += kGaussWeights[g] * f * kernel(mid + half * t);
    }
    total += half * seg;
  }
  const double a = grid.front(), b = grid.back();
  const EdgeModel left = fit_edge(values[0], values[1], values[2], grid[1] - a, grid[2] - a);
  const EdgeModel right =
      fit_edge(values[n - 1], values[n - 2], values[n - 3], b - grid[n - 2], b - grid[n - 3]);
  const double scale = b - a;
  const double dist_a = std::isfinite(pole) ? std::abs(pole - a) : scale;
  const double dist_b = std::isfinite(pole) ? std::abs(pole - b) : scale;
  total += integrate_edge_segment(left, a, 1.0, dist_a, kernel);
  total += integrate_edge_segment(right, b, -1.0, dist_b, kernel);
  return total;
}

}  // namespace spectral_inform::detail
