#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "spectra.hpp"

namespace spectral_inform {

/// Aspect ratio c = n / m of an n x m matrix with n <= m.
struct AspectRatio {
  double c = 1.0;

  AspectRatio() = default;
  explicit AspectRatio(double value) : c(value) {
    if (!(value > 0.0 && value <= 1.0)) throw InputError("aspect ratio must lie in (0, 1]");
  }
  static AspectRatio of(std::size_t n, std::size_t m) {
    if (n == 0 || m == 0 || n > m) throw InputError("aspect ratio needs 0 < n <= m");
    return AspectRatio(static_cast<double>(n) / static_cast<double>(m));
  }
};

namespace detail {

inline void check_off_support(const SpectralMeasure& m, double z, const char* who) {
  if (!std::isfinite(z)) throw DomainError(std::string(who) + ": non-finite argument", 0);
  const double eps0 = 1e-12 * m.scale();
  if (m.is_discrete()) {
    const auto atoms = m.atoms();
    auto it = std::lower_bound(atoms.begin(), atoms.end(), z,
                               [](const Atom& a, double v) { return a.location < v; });
    const bool near_hi = it != atoms.end() && std::abs(it->location - z) <= eps0;
    const bool near_lo = it != atoms.begin() && std::abs((it - 1)->location - z) <= eps0;
    if (near_hi || near_lo) throw DomainError(std::string(who) + ": argument hits an atom", 0);
    return;
  }
  const auto pieces = m.pieces();
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    if (z >= pieces[k].a - eps0 && z <= pieces[k].b + eps0)
      throw DomainError(std::string(who) + ": argument inside support interval " +
                            std::to_string(pieces.size() - k),
                        static_cast<int>(pieces.size() - k));
  }
}

inline double sum_G(const SpectralMeasure& m, double z) {
  return m.integrate(z, [z](double x) { return 1.0 / (z - x); });
}

inline double sum_G_prime(const SpectralMeasure& m, double z) {
  return -m.integrate(z, [z](double x) { return 1.0 / ((z - x) * (z - x)); });
}

}  // namespace detail

/// G(z) = integral of d mu(x) / (z - x).
inline double cauchy_G(const SpectralMeasure& m, double z) {
  detail::check_off_support(m, z, "cauchy_G");
  return detail::sum_G(m, z);
}

/// G'(z) = -integral of d mu(x) / (z - x)^2; strictly negative off the support.
inline double cauchy_G_prime(const SpectralMeasure& m, double z) {
  detail::check_off_support(m, z, "cauchy_G_prime");
  return detail::sum_G_prime(m, z);
}

namespace detail {

inline void check_phi_domain(const SpectralMeasure& m, double z, const char* who) {
  if (!(z > 0.0)) throw DomainError(std::string(who) + ": argument must be positive", 0);
  check_off_support(m, z, who);
  check_off_support(m, -z, who);
}

inline double phi_unchecked(const SpectralMeasure& m, double z) {
  if (m.is_discrete()) {
    long double t = 0.0L;
    const long double zz = static_cast<long double>(z) * z;
    for (const Atom& a : m.atoms()) {
      const long double x = a.location;
      t += a.weight * (static_cast<long double>(z) / (zz - x * x));
    }
    return static_cast<double>(t);
  }
  return 0.5 * (sum_G(m, z) - sum_G(m, -z));
}

inline double phi_prime_unchecked(const SpectralMeasure& m, double z) {
  if (m.is_discrete()) {
    long double t = 0.0L;
    const long double zz = static_cast<long double>(z) * z;
    for (const Atom& a : m.atoms()) {
      const long double x = a.location;
      const long double d = zz - x * x;
      t -= a.weight * ((zz + x * x) / (d * d));
    }
    return static_cast<double>(t);
  }
  return 0.5 * (sum_G_prime(m, z) + sum_G_prime(m, -z));
}

}  // namespace detail

/// phi(z) = integral of z / (z^2 - t^2) d mu(t), z > 0.
inline double phi_transform(const SpectralMeasure& m, double z) {
  detail::check_phi_domain(m, z, "phi_transform");
  return detail::phi_unchecked(m, z);
}

inline double phi_transform_prime(const SpectralMeasure& m, double z) {
  detail::check_phi_domain(m, z, "phi_transform_prime");
  return detail::phi_prime_unchecked(m, z);
}

/// c mu + (1 - c) delta_0.
struct CompanionMeasure {
  SpectralMeasure base;
  AspectRatio c;

  /// phi of the companion: c phi_mu(z) + (1 - c) / z.
  double phi(double z) const { return c.c * phi_transform(base, z) + (1.0 - c.c) / z; }
  double phi_prime(double z) const {
    return c.c * phi_transform_prime(base, z) - (1.0 - c.c) / (z * z);
  }
  /// Explicit discrete measure (discrete base only).
  SpectralMeasure as_discrete() const {
    if (!base.is_discrete()) throw InputError("companion: explicit form needs a discrete base");
    std::vector<Atom> atoms;
    for (const Atom& a : base.atoms()) atoms.push_back({a.location, c.c * a.weight});
    if (c.c < 1.0) atoms.push_back({0.0, 1.0 - c.c});
    return SpectralMeasure::discrete(std::move(atoms));
  }
};

inline CompanionMeasure companion(const SpectralMeasure& m, AspectRatio c) { return {m, c}; }

/// D(z) = phi(z) [c phi(z) + (1 - c) / z].
inline double d_transform(const SpectralMeasure& m, AspectRatio c, double z) {
  detail::check_phi_domain(m, z, "d_transform");
  const double p = detail::phi_unchecked(m, z);
  return p * (c.c * p + (1.0 - c.c) / z);
}

inline double d_transform_prime(const SpectralMeasure& m, AspectRatio c, double z) {
  detail::check_phi_domain(m, z, "d_transform_prime");
  const double p = detail::phi_unchecked(m, z);
  const double dp = detail::phi_prime_unchecked(m, z);
  return dp * (c.c * p + (1.0 - c.c) / z) + p * (c.c * dp - (1.0 - c.c) / (z * z));
}

enum class TransformId { G, GPrime, D, DPrime, Phi, PhiPrime };

inline const char* to_string(TransformId f) {
  switch (f) {
    case TransformId::G: return "G";
    case TransformId::GPrime: return "G'";
    case TransformId::D: return "D";
    case TransformId::DPrime: return "D'";
    case TransformId::Phi: return "phi";
    case TransformId::PhiPrime: return "phi'";
  }
  return "?";
}

inline double evaluate(TransformId f, const SpectralMeasure& m, std::optional<AspectRatio> c, double z) {
  const AspectRatio cc = c.value_or(AspectRatio(1.0));
  switch (f) {
    case TransformId::G: return cauchy_G(m, z);
    case TransformId::GPrime: return cauchy_G_prime(m, z);
    case TransformId::D: return d_transform(m, cc, z);
    case TransformId::DPrime: return d_transform_prime(m, cc, z);
    case TransformId::Phi: return phi_transform(m, z);
    case TransformId::PhiPrime: return phi_transform_prime(m, z);
  }
  throw InputError("evaluate: unknown transform");
}

inline TransformId derivative_of(TransformId f) {
  switch (f) {
    case TransformId::G: return TransformId::GPrime;
    case TransformId::D: return TransformId::DPrime;
    case TransformId::Phi: return TransformId::PhiPrime;
    default: throw InputError("derivative_of: no derivative available");
  }
}

// ---------------------------------------------------------------------------
// Edge limits

/// Which side of the support the edge is approached from: b_j from above,
/// a_j from below.
enum class EdgeSide { Upper, Lower };

struct EdgeRef {
  double location = 0.0;
  EdgeSide side = EdgeSide::Upper;
};

inline EdgeRef upper_edge(const SupportProfile& s, std::size_t j) { return {s.upper(j), EdgeSide::Upper}; }
inline EdgeRef lower_edge(const SupportProfile& s, std::size_t j) { return {s.lower(j), EdgeSide::Lower}; }

/// Offsets epsilon (decreasing) at which f(edge +- epsilon) is sampled, and
/// how the samples are extrapolated to epsilon = 0.
struct EpsSchedule {
  enum class Extrapolation { Aitken, SqrtFit, Last };
  std::vector<double> eps;
  Extrapolation extrapolation = Extrapolation::Aitken;

  /// {1e-1, ..., 1e-6} x scale.
  static EpsSchedule decades(double scale, int first = 1, int last = 6) {
    EpsSchedule s;
    for (int k = first; k <= last; ++k) s.eps.push_back(scale * std::pow(10.0, -k));
    return s;
  }
  /// eps_star x {16, 8, 4, 2, 1}, fitted as L + C sqrt(eps).
  static EpsSchedule atom_scaled(double eps_star) {
    EpsSchedule s;
    for (double f : {16.0, 8.0, 4.0, 2.0, 1.0}) s.eps.push_back(f * eps_star);
    s.extrapolation = Extrapolation::SqrtFit;
    return s;
  }
  /// A single evaluation at eps (no extrapolation, no divergence test).
  static EpsSchedule fixed(double eps) {
    EpsSchedule s;
    s.eps = {eps};
    s.extrapolation = Extrapolation::Last;
    return s;
  }
};

/// Default schedule for edge b_j (Upper) or a_j (Lower) of a profile of m.
/// Densities use decades of the range; discrete measures use multiples of
/// eps_star = 3 x the mean spacing of the 20 atoms nearest the edge, with the
/// largest rung kept below half of the adjacent gap. Divergence is tested on
/// every schedule with at least three rungs, except for G, D and phi on a
/// clipped ladder (see edge_limit).
inline EpsSchedule default_eps_schedule(const SpectralMeasure& m, const SupportProfile& s, std::size_t j,
                                        EdgeSide side) {
  if (!m.is_discrete()) return EpsSchedule::decades(m.scale());
  double eps_star = 3.0 * edge_mean_spacing(m, s, j, side == EdgeSide::Upper, 20);
  if (!(eps_star > 0.0)) eps_star = 1e-3 * m.scale();
  double gap = std::numeric_limits<double>::infinity();
  if (side == EdgeSide::Upper && j > 1) gap = s.lower(j - 1) - s.upper(j);
  if (side == EdgeSide::Lower && j < s.size()) gap = s.lower(j) - s.upper(j + 1);
  const bool clipped = std::isfinite(gap) && eps_star > gap / 32.0;
  if (clipped) eps_star = gap / 32.0;
  EpsSchedule out = EpsSchedule::atom_scaled(eps_star);
  // Rungs squeezed toward the atoms follow the poles rather than the edge
  // law; the fit is then unreliable and the last rung is used as is.
  if (clipped) out.extrapolation = EpsSchedule::Extrapolation::Last;
  return out;
}

struct EdgeLimit {
  /// Extrapolated limit, or +-infinity when divergence was declared.
  double value = 0.0;
  bool divergent = false;
  std::vector<double> eps;
  std::vector<double> samples;

  bool finite() const noexcept { return !divergent; }
};

namespace detail {

// Growth classification of samples v_k taken at decreasing offsets.
inline bool diverges(const std::vector<double>& eps, const std::vector<double>& v) {
  const std::size_t k = v.size();
  if (k < 3) return false;
  const double d1 = v[k - 1] - v[k - 2], d0 = v[k - 2] - v[k - 3];
  if (d1 == 0.0 || d0 == 0.0 || (d1 > 0.0) != (d0 > 0.0)) return false;
  const double thr1 = std::pow(1.5, std::log10(eps[k - 2] / eps[k - 1]));
  const double thr0 = std::pow(1.5, std::log10(eps[k - 3] / eps[k - 2]));
  const bool value_growth = std::abs(v[k - 1]) > thr1 * std::abs(v[k - 2]) &&
                            std::abs(v[k - 2]) > thr0 * std::abs(v[k - 3]) &&
                            std::abs(d1) > std::abs(d0);
  // Logarithmic growth: increments per rung do not shrink.
  bool flat_increments = std::abs(d1) >= 0.95 * std::abs(d0);
  if (flat_increments && k >= 4) {
    const double dm = v[k - 3] - v[k - 4];
    flat_increments = dm != 0.0 && (dm > 0.0) == (d0 > 0.0) && std::abs(d0) >= 0.95 * std::abs(dm);
  }
  return value_growth || flat_increments;
}

inline double aitken(const std::vector<double>& v) {
  const std::size_t k = v.size();
  if (k < 3) return v.back();
  const double v0 = v[k - 3], v1 = v[k - 2], v2 = v[k - 1];
  const double d1 = v2 - v1, d0 = v1 - v0;
  const double den = d1 - d0;
  if (std::abs(den) <= 1e-14 * (std::abs(v2) + std::abs(d1)) || d1 == 0.0) return v2;
  const double r = d1 / d0;
  if (!(std::abs(r) < 1.0)) return v2;
  return v2 - d1 * d1 / den;
}

inline double sqrt_fit(const std::vector<double>& eps, const std::vector<double>& v) {
  const std::size_t k = v.size();
  if (k < 2) return v.back();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double x = std::sqrt(eps[i]);
    sx += x;
    sy += v[i];
    sxx += x * x;
    sxy += x * v[i];
  }
  const double den = k * sxx - sx * sx;
  if (den == 0.0) return v.back();
  const double slope = (k * sxy - sx * sy) / den;
  return (sy - slope * sx) / static_cast<double>(k);
}

}  // namespace detail

/// f(edge+) for an upper edge or f(edge-) for a lower edge, extrapolated over
/// the schedule. Divergence is reported as +-infinity.
inline EdgeLimit edge_limit(TransformId f, const SpectralMeasure& m, std::optional<AspectRatio> c,
                            const EdgeRef& edge, const EpsSchedule& schedule) {
  if (schedule.eps.empty()) throw InputError("edge_limit: empty schedule");
  EdgeLimit out;
  const double dir = edge.side == EdgeSide::Upper ? 1.0 : -1.0;
  for (double e : schedule.eps) {
    out.eps.push_back(e);
    out.samples.push_back(evaluate(f, m, c, edge.location + dir * e));
  }
  const auto& v = out.samples;
  // On a squeezed ladder over atoms the growth of G, D or phi is the pole of
  // the nearest atom, not an edge law; only derivatives are classified there.
  const bool value_level = f == TransformId::G || f == TransformId::D || f == TransformId::Phi;
  const bool squeezed = m.is_discrete() && schedule.extrapolation == EpsSchedule::Extrapolation::Last;
  if (!(value_level && squeezed) && detail::diverges(out.eps, v)) {
    out.divergent = true;
    out.value = (v.back() > v[v.size() - 2]) ? std::numeric_limits<double>::infinity()
                                             : -std::numeric_limits<double>::infinity();
    return out;
  }
  switch (schedule.extrapolation) {
    case EpsSchedule::Extrapolation::Aitken: out.value = detail::aitken(v); break;
    case EpsSchedule::Extrapolation::SqrtFit: out.value = detail::sqrt_fit(out.eps, v); break;
    case EpsSchedule::Extrapolation::Last: out.value = v.back(); break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inversion on a gap

struct InvertOptions {
  /// Precomputed f(lo+) and f(hi-), e.g. from edge_limit. When absent they are
  /// read off the function near the bracket ends.
  std::optional<double> value_at_lo;
  std::optional<double> value_at_hi;
  int max_iterations = 200;
  double rel_tol = 1e-13;
};

namespace detail {

struct Bracket {
  double lo = 0.0, hi = 0.0;   // effective bracket inside the open gap
  double f_lo = 0.0, f_hi = 0.0;
};

// Largest z in (l, h) before the derivative of f first turns non-negative.
template <class Fp>
double first_stationary(Fp&& fp, double l, double h) {
  constexpr int kSamples = 256;
  double prev = l;
  for (int k = 1; k <= kSamples; ++k) {
    const double z = l + (h - l) * k / kSamples;
    if (fp(z) >= 0.0) {
      double a = prev, b = z;
      for (int it = 0; it < 100 && b - a > 1e-15 * std::abs(b); ++it) {
        const double mid = 0.5 * (a + b);
        (fp(mid) >= 0.0 ? b : a) = mid;
      }
      return a;
    }
    prev = z;
  }
  return h;
}

}  // namespace detail

/// Solves f(z) = y for z in the open gap (lo, hi), f in {G, D}. f must be
/// decreasing there; for D only the decreasing branch starting at lo is used.
/// hi may be +infinity. Throws RegimeError carrying f(lo+), f(hi-) when y is not
/// attained.
inline double invert_on_gap(TransformId f, const SpectralMeasure& m, std::optional<AspectRatio> c, double y,
                            std::pair<double, double> gap, const InvertOptions& opt = {}) {
  if (f != TransformId::G && f != TransformId::D)
    throw InputError("invert_on_gap: only G and D can be inverted");
  auto [lo, hi] = gap;
  if (!(hi > lo)) throw InputError("invert_on_gap: empty gap");
  if (!std::isfinite(y)) throw InputError("invert_on_gap: non-finite target");
  const TransformId fp_id = derivative_of(f);
  auto fv = [&](double z) { return evaluate(f, m, c, z); };
  auto fp = [&](double z) { return evaluate(fp_id, m, c, z); };
  const double scale = m.scale();

  // Effective upper end.
  double H;
  double f_hi_limit;
  if (!std::isfinite(hi)) {
    H = std::max(lo, 0.0) + scale;
    int guard = 0;
    while (fv(H) >= y && y > 0.0 && guard++ < 200) H = std::max(lo, 0.0) + 2.0 * (H - std::max(lo, 0.0));
    f_hi_limit = opt.value_at_hi.value_or(0.0);
  } else {
    const double margin = std::max(1e-12 * scale, 1e-9 * (hi - lo));
    H = hi - margin;
    if (f == TransformId::D) H = detail::first_stationary(fp, lo + margin, H);
    f_hi_limit = opt.value_at_hi.value_or(fv(H));
  }

  // Effective lower end: move toward lo until f exceeds y.
  double gap_len = std::isfinite(hi) ? hi - lo : scale;
  double delta = 1e-3 * std::min(gap_len, H - lo);
  double L = lo + delta;
  double fL = fv(L);
  while (fL <= y && delta > 1e-12 * scale) {
    delta *= 0.1;
    L = lo + delta;
    fL = fv(L);
  }
  const double f_lo_limit = opt.value_at_lo.value_or(fL);
  if (!(y < f_lo_limit) || !(y > f_hi_limit))
    throw RegimeError("invert_on_gap: target outside the attainable range", f_lo_limit, f_hi_limit);
  double fH = fv(H);
  if (!(fL > y)) throw RegimeError("invert_on_gap: target above f near the lower end", f_lo_limit, f_hi_limit);
  if (!(fH < y)) throw RegimeError("invert_on_gap: target below f near the upper end", f_lo_limit, f_hi_limit);

  // Safeguarded Newton on the bracket [L, H] with f(L) > y > f(H).
  double a = L, b = H;
  double z = 0.5 * (a + b);
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double r = fv(z) - y;
    if (std::abs(r) <= opt.rel_tol * std::abs(y) || b - a <= 4e-16 * std::abs(z)) return z;
    if (r > 0.0) a = z; else b = z;
    const double d = fp(z);
    double next = (d < 0.0) ? z - r / d : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    z = next;
  }
  const double r = fv(z) - y;
  if (std::abs(r) <= 1e-10 * std::abs(y)) return z;
  throw RegimeError("invert_on_gap: no convergence", f_lo_limit, f_hi_limit);
}

}  // namespace spectral_inform
