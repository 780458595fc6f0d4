#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "json.hpp"
#include "linalg.hpp"
#include "spectra.hpp"
#include "transforms.hpp"

namespace spectral_inform {

enum class Geometry { SymmetricEigen, RectangularSVD };

/// Low-rank signal sum_i theta_i u_i v_i^T (v = u in the symmetric case).
struct SignalModel {
  std::vector<double> thetas;  // descending, positive
  Geometry geometry = Geometry::RectangularSVD;
  Matrix u;  // n x r, optional (0 columns when absent)
  Matrix v;  // m x r, optional; unused for SymmetricEigen

  std::size_t rank() const noexcept { return thetas.size(); }
  bool has_vectors() const noexcept { return u.cols() > 0; }

  void validate() const {
    if (thetas.empty()) throw InputError("signal model: rank must be at least 1");
    for (std::size_t i = 0; i < thetas.size(); ++i) {
      if (!(thetas[i] > 0.0) || !std::isfinite(thetas[i]))
        throw InputError("signal model: strengths must be positive and finite");
      if (i > 0 && thetas[i] > thetas[i - 1]) throw InputError("signal model: strengths must be descending");
    }
    auto check = [&](const Matrix& w, const char* side) {
      if (w.cols() == 0) return;
      if (static_cast<std::size_t>(w.cols()) != rank())
        throw InputError(std::string("signal model: ") + side + " vectors do not match the rank");
      const Matrix gram = w.transpose() * w;
      for (Eigen::Index a = 0; a < gram.rows(); ++a)
        for (Eigen::Index b = 0; b < gram.cols(); ++b) {
          const double target = a == b ? 1.0 : 0.0;
          const double tol = a == b ? 1e-10 : 1e-8;
          if (std::abs(gram(a, b) - target) > tol)
            throw InputError(std::string("signal model: ") + side + " vectors are not orthonormal");
        }
    };
    check(u, "left");
    if (geometry == Geometry::RectangularSVD) check(v, "right");
  }

  /// The signal matrix itself (requires vectors).
  Matrix matrix() const {
    if (!has_vectors()) throw InputError("signal model: no planted vectors");
    const Matrix& right = geometry == Geometry::SymmetricEigen ? u : v;
    Matrix s = Matrix::Zero(u.rows(), right.rows());
    for (std::size_t i = 0; i < rank(); ++i)
      s.noalias() += thetas[i] * u.col(static_cast<Eigen::Index>(i)) *
                     right.col(static_cast<Eigen::Index>(i)).transpose();
    return s;
  }
};

enum class Regime { Outlier, StuckAtLowerEdge, StuckAtUpperEdge };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::Outlier: return "outlier";
    case Regime::StuckAtLowerEdge: return "stuck_at_lower_edge";
    case Regime::StuckAtUpperEdge: return "stuck_at_upper_edge";
  }
  return "?";
}

/// Prediction for one (theta_i, gap j) pair. Overlaps are absent (Unknown)
/// when the theory does not pin them.
struct OutlierPrediction {
  std::size_t i = 0;  // 1-based strength index
  std::size_t j = 0;  // 1-based gap index, gap (b_j, a_{j-1})
  Regime regime = Regime::StuckAtLowerEdge;
  double rho = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> overlap_left;
  std::optional<double> overlap_right;
  std::size_t bulk_position = 0;  // ceil(n c_{j-1}) + i, 0 when n is unknown
  /// Strength thresholds in theta units: Outlier iff lower < theta < upper.
  double threshold_lower = 0.0;
  double threshold_upper = std::numeric_limits<double>::infinity();
  /// Edge values of the governing transform (G or D) and of G' (symmetric)
  /// or phi' (rectangular, where D' diverges exactly when phi' does).
  double f_lower_edge = 0.0, f_upper_edge = 0.0;
  double fprime_lower_edge = 0.0, fprime_upper_edge = 0.0;
  /// Edge values are extrapolated from a finite-n spectrum (uncontrolled bias).
  bool finite_n_edges = false;
};

namespace detail {

inline nlohmann::json finite_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}
inline nlohmann::json optional_or_null(const std::optional<double>& x) {
  return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json to_json(const OutlierPrediction& p) {
  return {{"i", p.i},
          {"j", p.j},
          {"regime", to_string(p.regime)},
          {"rho", detail::finite_or_null(p.rho)},
          {"overlap_left", detail::optional_or_null(p.overlap_left)},
          {"overlap_right", detail::optional_or_null(p.overlap_right)},
          {"bulk_position", p.bulk_position},
          {"thresholds",
           {{"lower", detail::finite_or_null(p.threshold_lower)},
            {"upper", detail::finite_or_null(p.threshold_upper)}}},
          {"finite_n_edges", p.finite_n_edges}};
}

struct PredictOptions {
  /// Dimension used for the bulk positions; defaults to the atom count of a
  /// discrete noise measure, or to the row count of the planted vectors.
  std::optional<std::size_t> n;
  /// Overrides the default edge schedule for every edge.
  std::optional<EpsSchedule> schedule;
};

namespace detail {

struct GapEdges {
  double f_lo = 0.0, f_hi = 0.0;    // f(b_j+), f(a_{j-1}-) (f_hi = 0 for j = 1)
  double fp_lo = 0.0, fp_hi = 0.0;  // derivative limits (fp_hi = 0 for j = 1)
  bool fp_lo_divergent = false, fp_hi_divergent = false;
};

// Edge values of D are assembled from those of phi: D is continuous in
// (phi, z), and D' diverges exactly when phi' does (phi > 0 near the edge).
inline EdgeLimit limit_of(TransformId f, const SpectralMeasure& m, std::optional<AspectRatio> c,
                          const EdgeRef& e, const EpsSchedule& sch) {
  if (f != TransformId::D && f != TransformId::DPrime) return edge_limit(f, m, c, e, sch);
  const TransformId base = f == TransformId::D ? TransformId::Phi : TransformId::PhiPrime;
  EdgeLimit l = edge_limit(base, m, c, e, sch);
  if (f == TransformId::DPrime || l.divergent) return l;
  const double cc = c.value_or(AspectRatio(1.0)).c;
  l.value = l.value * (cc * l.value + (1.0 - cc) / e.location);
  return l;
}

inline GapEdges gap_edges(TransformId f, const SpectralMeasure& m, std::optional<AspectRatio> c,
                          const SupportProfile& s, std::size_t j, const PredictOptions& opt) {
  GapEdges e;
  const TransformId fp = derivative_of(f);
  const EpsSchedule up = opt.schedule.value_or(default_eps_schedule(m, s, j, EdgeSide::Upper));
  e.f_lo = limit_of(f, m, c, upper_edge(s, j), up).value;
  const EdgeLimit dl = limit_of(fp, m, c, upper_edge(s, j), up);
  e.fp_lo = dl.value;
  e.fp_lo_divergent = dl.divergent && dl.value < 0.0;
  if (j > 1) {
    const EpsSchedule dn = opt.schedule.value_or(default_eps_schedule(m, s, j - 1, EdgeSide::Lower));
    e.f_hi = limit_of(f, m, c, lower_edge(s, j - 1), dn).value;
    if (f == TransformId::D) {
      // D decreases across the gap only while phi stays positive; past the
      // zero of phi it reaches values <= 0, so every positive target is hit.
      const double phi_hi = limit_of(TransformId::Phi, m, c, lower_edge(s, j - 1), dn).value;
      if (!(phi_hi > 0.0)) e.f_hi = std::min(e.f_hi, 0.0);
    }
    const EdgeLimit du = limit_of(fp, m, c, lower_edge(s, j - 1), dn);
    e.fp_hi = du.value;
    e.fp_hi_divergent = du.divergent && du.value < 0.0;
  }
  return e;
}

// theta threshold from an edge value of G (power 1) or D (power 2).
inline double strength_threshold(double f_edge, int power) {
  if (std::isinf(f_edge) && f_edge > 0.0) return 0.0;
  if (!(f_edge > 0.0)) return std::numeric_limits<double>::infinity();
  return power == 1 ? 1.0 / f_edge : 1.0 / std::sqrt(f_edge);
}

inline std::size_t default_dimension(const SpectralMeasure& m, const SignalModel& sig, const PredictOptions& o) {
  if (o.n) return *o.n;
  if (m.is_discrete()) return m.atoms().size();
  if (sig.has_vectors()) return static_cast<std::size_t>(sig.u.rows());
  return 0;
}

template <class OutlierFn>
std::vector<OutlierPrediction> predict_common(TransformId f, int power, const SpectralMeasure& m,
                                              std::optional<AspectRatio> c, const SupportProfile& s,
                                              const SignalModel& sig, const PredictOptions& opt,
                                              OutlierFn&& outlier) {
  std::vector<double> thetas = sig.thetas;
  if (thetas.empty()) throw InputError("predict: empty signal model");
  for (std::size_t i = 0; i < thetas.size(); ++i)
    if (!(thetas[i] > 0.0) || (i > 0 && thetas[i] > thetas[i - 1]))
      throw InputError("predict: strengths must be positive and descending");
  const std::size_t n = default_dimension(m, sig, opt);
  std::vector<OutlierPrediction> out;
  for (std::size_t j = 1; j <= s.size(); ++j) {
    const GapEdges e = gap_edges(f, m, c, s, j, opt);
    const double lower = strength_threshold(e.f_lo, power);
    const double upper = j == 1 ? std::numeric_limits<double>::infinity() : strength_threshold(e.f_hi, power);
    const bool stuck_overlap_zero = e.fp_lo_divergent && (j == 1 || e.fp_hi_divergent);
    for (std::size_t i = 1; i <= thetas.size(); ++i) {
      const double theta = thetas[i - 1];
      OutlierPrediction p;
      p.i = i;
      p.j = j;
      p.threshold_lower = lower;
      p.threshold_upper = upper;
      p.f_lower_edge = e.f_lo;
      p.f_upper_edge = e.f_hi;
      p.fprime_lower_edge = e.fp_lo;
      p.fprime_upper_edge = e.fp_hi;
      p.finite_n_edges = m.is_discrete();
      p.bulk_position = n > 0 ? s.bulk_position(n, j, i) : 0;
      // Ties resolve to the stuck regimes.
      if (theta <= lower * (1.0 + 1e-12)) {
        p.regime = Regime::StuckAtLowerEdge;
      } else if (theta >= upper * (1.0 - 1e-12)) {
        p.regime = Regime::StuckAtUpperEdge;
      } else {
        InvertOptions io;
        io.value_at_lo = e.f_lo;
        io.value_at_hi = e.f_hi;
        const double y = power == 1 ? 1.0 / theta : 1.0 / (theta * theta);
        try {
          p.rho = invert_on_gap(f, m, c, y, s.gap(j), io);
          p.regime = Regime::Outlier;
          outlier(p, theta);
        } catch (const RegimeError&) {
          // The sampled function disagrees with the extrapolated edge value
          // (finite-n only): classify by the side that was missed.
          p.regime = Regime::StuckAtLowerEdge;
        }
      }
      if (p.regime != Regime::Outlier && stuck_overlap_zero) {
        p.overlap_left = 0.0;
        p.overlap_right = 0.0;
      }
      out.push_back(p);
    }
  }
  return out;
}

inline double clamp_unit(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace detail

/// Regimes, outlier limits and eigenvector overlaps of a symmetric spiked
/// model with noise spectral measure m (support profile s).
inline std::vector<OutlierPrediction> predict_eigen_outliers(const SpectralMeasure& m, const SupportProfile& s,
                                                             const SignalModel& sig,
                                                             const PredictOptions& opt = {}) {
  if (sig.geometry != Geometry::SymmetricEigen)
    throw InputError("predict_eigen_outliers: signal model is not symmetric");
  return detail::predict_common(TransformId::G, 1, m, std::nullopt, s, sig, opt,
                                [&](OutlierPrediction& p, double theta) {
                                  const double ov = detail::clamp_unit(
                                      -1.0 / (theta * theta * cauchy_G_prime(m, p.rho)));
                                  p.overlap_left = ov;
                                  p.overlap_right = ov;
                                });
}

/// Regimes, outlier limits and singular vector overlaps of a rectangular
/// spiked model; m is the singular value measure of the n x m noise, c = n/m.
inline std::vector<OutlierPrediction> predict_sv_outliers(const SpectralMeasure& m, const SupportProfile& s,
                                                          AspectRatio c, const SignalModel& sig,
                                                          const PredictOptions& opt = {}) {
  if (sig.geometry != Geometry::RectangularSVD)
    throw InputError("predict_sv_outliers: signal model is not rectangular");
  const CompanionMeasure tilde = companion(m, c);
  return detail::predict_common(TransformId::D, 2, m, c, s, sig, opt, [&](OutlierPrediction& p, double theta) {
    const double dp = d_transform_prime(m, c, p.rho);
    const double t2 = theta * theta;
    p.overlap_left = detail::clamp_unit(-2.0 * phi_transform(m, p.rho) / (t2 * dp));
    p.overlap_right = detail::clamp_unit(-2.0 * tilde.phi(p.rho) / (t2 * dp));
  });
}

// ---------------------------------------------------------------------------
// Exact finite-n identities of the rank-one symmetric model X~ = X + theta u u^T

struct IdentityEntry {
  std::size_t index = 0;  // 1-based descending eigenvalue index of X~
  double z = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};

struct SkippedEntry {
  std::size_t index = 0;
  double z = 0.0;
  std::string note;
};

struct ResidualReport {
  std::vector<IdentityEntry> entries;
  std::vector<SkippedEntry> skipped;
  double max_residual = 0.0;
};

namespace detail {

inline SpectralMeasure weighted_measure(const SymmetricEigensystem& x, const Vector& u) {
  if (x.vectors.rows() != u.size() || x.values.size() != u.size())
    throw InputError("finite-n check: dimension mismatch");
  const Vector v = x.vectors.transpose() * u;
  std::vector<Atom> atoms(static_cast<std::size_t>(u.size()));
  for (Eigen::Index i = 0; i < u.size(); ++i) atoms[static_cast<std::size_t>(i)] = {x.values(i), v(i) * v(i)};
  return SpectralMeasure::discrete(std::move(atoms));
}

inline bool coincides(const Vector& values, double z, double tol) {
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::abs(values(i) - z) <= tol) return true;
  return false;
}

}  // namespace detail

/// |G_{mu_n}(z) - 1/theta| at every eigenvalue z of X~ that does not coincide
/// (within 1e-9) with an eigenvalue of X. mu_n weights the eigenvalues of X by
/// the squared coordinates of u in X's eigenbasis.
inline ResidualReport finite_n_master_check(const Vector& xtil_values, const SymmetricEigensystem& x,
                                            const Vector& u, double theta, double coincidence_tol = 1e-9) {
  if (!(theta > 0.0)) throw InputError("finite_n_master_check: theta must be positive");
  const SpectralMeasure mu = detail::weighted_measure(x, u);
  ResidualReport r;
  for (Eigen::Index k = 0; k < xtil_values.size(); ++k) {
    const double z = xtil_values(k);
    const std::size_t idx = static_cast<std::size_t>(k) + 1;
    if (detail::coincides(x.values, z, coincidence_tol)) {
      r.skipped.push_back({idx, z, "coincides with an eigenvalue of X"});
      continue;
    }
    const double g = detail::sum_G(mu, z);
    IdentityEntry e{idx, z, g, 1.0 / theta, std::abs(g - 1.0 / theta)};
    r.max_residual = std::max(r.max_residual, e.residual);
    r.entries.push_back(e);
  }
  return r;
}

/// |<u, u~>|^2 against G(z)^2 / integral d mu_n / (z - x)^2 for every
/// non-coincident eigenpair (z, u~) of X~.
inline ResidualReport finite_n_overlap_check(const SymmetricEigensystem& xtil, const SymmetricEigensystem& x,
                                             const Vector& u, double theta, double coincidence_tol = 1e-9) {
  if (!(theta > 0.0)) throw InputError("finite_n_overlap_check: theta must be positive");
  if (xtil.vectors.cols() != xtil.values.size()) throw InputError("finite_n_overlap_check: eigenvectors of X~ needed");
  const SpectralMeasure mu = detail::weighted_measure(x, u);
  ResidualReport r;
  for (Eigen::Index k = 0; k < xtil.values.size(); ++k) {
    const double z = xtil.values(k);
    const std::size_t idx = static_cast<std::size_t>(k) + 1;
    if (detail::coincides(x.values, z, coincidence_tol)) {
      r.skipped.push_back({idx, z, "coincides with an eigenvalue of X"});
      continue;
    }
    const double ip = u.dot(xtil.vectors.col(k));
    const double g = detail::sum_G(mu, z);
    const double rhs = g * g / (-detail::sum_G_prime(mu, z));
    IdentityEntry e{idx, z, ip * ip, rhs, std::abs(ip * ip - rhs)};
    r.max_residual = std::max(r.max_residual, e.residual);
    r.entries.push_back(e);
  }
  return r;
}

struct InterlacingReport {
  bool holds = true;
  double max_violation = 0.0;
};

/// Rank-one Weyl interlacing for a positive perturbation (values descending):
/// lambda_i(X) <= lambda_i(X~) for all i and lambda_i(X~) <= lambda_{i-1}(X)
/// for i >= 2.
inline InterlacingReport interlacing_check(const Vector& x_values, const Vector& xtil_values, double tol = 1e-10) {
  if (x_values.size() != xtil_values.size()) throw InputError("interlacing_check: size mismatch");
  const double scale = std::max(1.0, x_values.cwiseAbs().maxCoeff());
  InterlacingReport rep;
  for (Eigen::Index i = 0; i < x_values.size(); ++i) {
    double v = x_values(i) - xtil_values(i);
    if (i > 0) v = std::max(v, xtil_values(i) - x_values(i - 1));
    rep.max_violation = std::max(rep.max_violation, v);
  }
  rep.holds = rep.max_violation <= tol * scale;
  return rep;
}


/// Both identities and interlacing for X~ = X + theta u u^T, evaluated from
/// the matrices in extended precision. Near-coincident eigenvalues make
/// |G'(z)| huge, so a double eigen-solver's O(eps) error in z alone can exceed
/// the identities' tolerance; long double pushes that floor down by ~2000x.
struct FiniteNIdentities {
  ResidualReport master;
  ResidualReport overlap;
  InterlacingReport interlacing;
  Vector x_values;     // descending
  Vector xtil_values;  // descending
};

inline FiniteNIdentities finite_n_identities(const Matrix& x, const Vector& u, double theta,
                                             double coincidence_tol = 1e-9) {
  using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using LVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  if (!(theta > 0.0)) throw InputError("finite_n_identities: theta must be positive");
  if (x.rows() != x.cols() || x.rows() != u.size()) throw InputError("finite_n_identities: dimension mismatch");
  if (!(u.norm() > 0.0)) throw InputError("finite_n_identities: u must be nonzero");
  const LMatrix xl = x.cast<long double>();
  LVector ul = u.cast<long double>();
  ul /= ul.norm();
  const LMatrix xtl = xl + static_cast<long double>(theta) * ul * ul.transpose();
  Eigen::SelfAdjointEigenSolver<LMatrix> ex(xl), et(xtl);
  if (ex.info() != Eigen::Success || et.info() != Eigen::Success)
    throw Error("finite_n_identities: eigen-decomposition did not converge");
  const LVector lam = ex.eigenvalues();
  const LVector coord = ex.eigenvectors().transpose() * ul;
  const LVector w = coord.array().square().matrix();
  const long double inv_theta = 1.0L / static_cast<long double>(theta);

  FiniteNIdentities out;
  out.x_values = lam.reverse().cast<double>();
  out.xtil_values = et.eigenvalues().reverse().cast<double>();
  const Eigen::Index n = lam.size();
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index col = n - 1 - k;  // descending order
    const long double z = et.eigenvalues()(col);
    const std::size_t idx = static_cast<std::size_t>(k) + 1;
    bool near = false;
    for (Eigen::Index i = 0; i < n && !near; ++i) near = std::abs(z - lam(i)) <= coincidence_tol;
    if (near) {
      out.master.skipped.push_back({idx, static_cast<double>(z), "coincides with an eigenvalue of X"});
      out.overlap.skipped.push_back(out.master.skipped.back());
      continue;
    }
    long double g = 0.0L, gp = 0.0L;
    for (Eigen::Index i = 0; i < n; ++i) {
      const long double r = 1.0L / (z - lam(i));
      g += w(i) * r;
      gp -= w(i) * r * r;
    }
    const long double ip = et.eigenvectors().col(col).dot(ul);
    const long double rhs = g * g / -gp;
    IdentityEntry m{idx, static_cast<double>(z), static_cast<double>(g), static_cast<double>(inv_theta),
                    static_cast<double>(std::abs(g - inv_theta))};
    IdentityEntry o{idx, static_cast<double>(z), static_cast<double>(ip * ip), static_cast<double>(rhs),
                    static_cast<double>(std::abs(ip * ip - rhs))};
    out.master.max_residual = std::max(out.master.max_residual, m.residual);
    out.overlap.max_residual = std::max(out.overlap.max_residual, o.residual);
    out.master.entries.push_back(m);
    out.overlap.entries.push_back(o);
  }
  out.interlacing = interlacing_check(out.x_values, out.xtil_values);
  return out;
}

}  // namespace spectral_inform
