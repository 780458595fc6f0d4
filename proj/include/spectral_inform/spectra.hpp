#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "json.hpp"
#include "quadrature.hpp"

namespace spectral_inform {

/// Point mass of a discrete spectral measure.
struct Atom {
  double location = 0.0;
  double weight = 0.0;
};

/// One interval [a, b] of a piecewise density, tabulated on `grid`
/// (grid.front() == a, grid.back() == b). `mass` is the integral of the
/// tabulated density and is filled in by SpectralMeasure::density.
struct DensityPiece {
  double a = 0.0;
  double b = 0.0;
  std::vector<double> grid;
  std::vector<double> density;
  double mass = 0.0;
};

/// Default number of grid points per tabulated piece.
inline constexpr std::size_t kDefaultGridPoints = 2048;

/// Tabulates `f` on a uniform grid over [a, b]. Non-finite samples at the
/// two endpoints are allowed (integrable edge blow-up); the endpoint values
/// are not used by the quadrature except as a linear fallback.
template <class F>
DensityPiece tabulate_piece(double a, double b, F&& f, double mass = 0.0,
                            std::size_t points = kDefaultGridPoints) {
  if (!(b > a)) throw InputError("tabulate_piece: need a < b");
  if (points < 5) throw InputError("tabulate_piece: need at least 5 grid points");
  DensityPiece p;
  p.a = a;
  p.b = b;
  p.mass = mass;
  p.grid.resize(points);
  p.density.resize(points);
  for (std::size_t k = 0; k < points; ++k) {
    const double x = (k + 1 == points) ? b : a + (b - a) * static_cast<double>(k) / (points - 1);
    p.grid[k] = x;
    p.density[k] = f(x);
  }
  return p;
}

/// A probability measure on the real line: either weighted atoms (empirical
/// spectra, weighted spectra sum |v_i|^2 delta_{lambda_i}) or a density on
/// disjoint intervals. Immutable after construction; atoms and pieces are
/// stored in ascending order.
class SpectralMeasure {
 public:
  enum class Kind { Discrete, PiecewiseDensity };

  SpectralMeasure() = default;

  /// Normalizes weights to total mass 1 and sorts atoms by location.
  static SpectralMeasure discrete(std::vector<Atom> atoms) {
    if (atoms.empty()) throw InputError("spectral measure: no atoms");
    long double total = 0.0L;
    for (const Atom& at : atoms) {
      if (!std::isfinite(at.location)) throw InputError("spectral measure: non-finite atom location");
      if (!(at.weight >= 0.0) || !std::isfinite(at.weight))
        throw InputError("spectral measure: negative or non-finite weight");
      total += at.weight;
    }
    if (!(total > 0.0L)) throw InputError("spectral measure: zero total weight");
    for (Atom& at : atoms) at.weight = static_cast<double>(at.weight / total);
    std::stable_sort(atoms.begin(), atoms.end(),
                     [](const Atom& l, const Atom& r) { return l.location < r.location; });
    SpectralMeasure m;
    m.kind_ = Kind::Discrete;
    m.atoms_ = std::move(atoms);
    return m;
  }

  /// Builds a piecewise-density measure. When every piece carries a positive
  /// `mass`, densities are rescaled to integrate to those masses (then
  /// renormalized to total 1); otherwise the masses are the integrals of the
  /// tabulated densities, renormalized to total 1.
  static SpectralMeasure density(std::vector<DensityPiece> pieces) {
    if (pieces.empty()) throw InputError("spectral measure: no density pieces");
    std::sort(pieces.begin(), pieces.end(),
              [](const DensityPiece& l, const DensityPiece& r) { return l.a < r.a; });
    for (std::size_t j = 0; j < pieces.size(); ++j) {
      validate_piece(pieces[j]);
      if (j > 0 && !(pieces[j - 1].b < pieces[j].a))
        throw InputError("spectral measure: density pieces overlap or touch");
    }
    const bool given = std::all_of(pieces.begin(), pieces.end(),
                                   [](const DensityPiece& p) { return p.mass > 0.0; });
    std::vector<double> raw(pieces.size());
    for (std::size_t j = 0; j < pieces.size(); ++j) {
      raw[j] = piece_integral(pieces[j], std::numeric_limits<double>::quiet_NaN(),
                              [](double) { return 1.0; });
      if (!(raw[j] > 0.0)) throw InputError("spectral measure: density piece has zero mass");
    }
    double total = 0.0;
    for (std::size_t j = 0; j < pieces.size(); ++j) total += given ? pieces[j].mass : raw[j];
    for (std::size_t j = 0; j < pieces.size(); ++j) {
      const double target = (given ? pieces[j].mass : raw[j]) / total;
      const double scale = target / raw[j];
      for (double& d : pieces[j].density) d *= scale;
      pieces[j].mass = target;
    }
    SpectralMeasure m;
    m.kind_ = Kind::PiecewiseDensity;
    m.pieces_ = std::move(pieces);
    return m;
  }

  Kind kind() const noexcept { return kind_; }
  bool is_discrete() const noexcept { return kind_ == Kind::Discrete; }
  std::span<const Atom> atoms() const noexcept { return atoms_; }
  std::span<const DensityPiece> pieces() const noexcept { return pieces_; }

  double min() const {
    return is_discrete() ? atoms_.front().location : pieces_.front().a;
  }
  double max() const {
    return is_discrete() ? atoms_.back().location : pieces_.back().b;
  }
  double range() const { return max() - min(); }

  /// Positive length scale for tolerances: the range, or the magnitude of the
  /// location for a degenerate single-point measure.
  double scale() const {
    const double r = range();
    if (r > 0.0) return r;
    return std::max(1.0, std::abs(max()));
  }

  double total_mass() const {
    long double t = 0.0L;
    if (is_discrete())
      for (const Atom& a : atoms_) t += a.weight;
    else
      for (const DensityPiece& p : pieces_) t += p.mass;
    return static_cast<double>(t);
  }

  /// Integral of kernel(x) d mu(x). `pole` is the location where the kernel is
  /// singular (used to grade the edge quadrature); pass NaN for smooth kernels.
  template <class Kernel>
  double integrate(double pole, Kernel&& kernel) const {
    if (is_discrete()) {
      long double t = 0.0L;
      for (const Atom& a : atoms_) t += static_cast<long double>(a.weight) * kernel(a.location);
      return static_cast<double>(t);
    }
    double t = 0.0;
    for (const DensityPiece& p : pieces_) t += piece_integral(p, pole, kernel);
    return t;
  }

  /// Image of the measure under x -> s * x (s > 0).
  SpectralMeasure scaled(double s) const {
    if (!(s > 0.0)) throw InputError("scaled: factor must be positive");
    SpectralMeasure m = *this;
    for (Atom& a : m.atoms_) a.location *= s;
    for (DensityPiece& p : m.pieces_) {
      p.a *= s;
      p.b *= s;
      for (double& g : p.grid) g *= s;
      for (double& d : p.density) d /= s;
    }
    return m;
  }

 private:
  static void validate_piece(const DensityPiece& p) {
    if (!(p.b > p.a)) throw InputError("density piece: need a < b");
    if (p.grid.size() != p.density.size()) throw InputError("density piece: grid/density size mismatch");
    if (p.grid.size() < 5) throw InputError("density piece: need at least 5 grid points");
    if (p.grid.front() != p.a || p.grid.back() != p.b)
      throw InputError("density piece: grid must start at a and end at b");
    for (std::size_t k = 1; k < p.grid.size(); ++k)
      if (!(p.grid[k] > p.grid[k - 1])) throw InputError("density piece: grid not increasing");
    for (std::size_t k = 0; k < p.density.size(); ++k) {
      const double d = p.density[k];
      const bool endpoint = (k == 0 || k + 1 == p.density.size());
      if (std::isnan(d) || d < 0.0) throw InputError("density piece: negative density value");
      if (!endpoint && !std::isfinite(d)) throw InputError("density piece: non-finite interior density");
    }
  }

  template <class Kernel>
  static double piece_integral(const DensityPiece& p, double pole, Kernel&& kernel) {
    return detail::integrate_tabulated(p.grid, p.density, pole, kernel);
  }

  Kind kind_ = Kind::Discrete;
  std::vector<Atom> atoms_;
  std::vector<DensityPiece> pieces_;
};

/// Empirical (optionally weighted) spectral measure of a list of values.
inline SpectralMeasure empirical_measure(std::span<const double> values,
                                         std::optional<std::span<const double>> weights = std::nullopt) {
  if (values.empty()) throw InputError("empirical_measure: empty input");
  if (weights && weights->size() != values.size())
    throw InputError("empirical_measure: weights and values differ in length");
  std::vector<Atom> atoms(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    if (w < 0.0) throw InputError("empirical_measure: negative weight");
    atoms[i] = {values[i], w};
  }
  return SpectralMeasure::discrete(std::move(atoms));
}

// ---------------------------------------------------------------------------
// Support detection

enum class EdgeEstimator { MinMax, QuantileTrimmed };
enum class SmallClusterPolicy { Error, MergeNearest };

struct SupportConfig {
  /// Split threshold tau = kappa * (max - min) / n.
  double kappa = 25.0;
  /// n used in tau; defaults to the number of atoms. Set it to the per-draw
  /// dimension when detecting on spectra pooled over several draws.
  std::optional<std::size_t> spacing_count;
  /// Clusters with fewer atoms violate the configuration (0 disables).
  std::size_t min_cluster = 0;
  SmallClusterPolicy small_cluster_policy = SmallClusterPolicy::Error;
  EdgeEstimator edge_estimator = EdgeEstimator::MinMax;
  /// Mass trimmed from each end of a cluster by the quantile edge estimator.
  double trim_quantile = 0.01;
};

/// Disjoint intervals of a (multi-bulk) spectrum. Public accessors use the
/// descending labels a_l < b_l < ... < a_1 < b_1 (j = 1 is the top bulk).
class SupportProfile {
 public:
  struct Interval {
    double a = 0.0;
    double b = 0.0;
  };

  SupportProfile() = default;

  /// From ascending clusters (lowest first) with their masses and optional
  /// atom counts.
  static SupportProfile from_ascending(std::vector<Interval> intervals, std::vector<double> masses,
                                       std::vector<std::size_t> counts, double separation) {
    if (intervals.empty() || intervals.size() != masses.size())
      throw InputError("support profile: interval/mass mismatch");
    SupportProfile s;
    s.intervals_.assign(intervals.rbegin(), intervals.rend());
    s.weights_.assign(masses.rbegin(), masses.rend());
    s.counts_.assign(counts.rbegin(), counts.rend());
    s.separation_ = separation;
    const double total = std::accumulate(s.weights_.begin(), s.weights_.end(), 0.0);
    for (double& w : s.weights_) w /= total;
    s.cumulative_.assign(s.weights_.size() + 1, 0.0);
    for (std::size_t j = 0; j < s.weights_.size(); ++j)
      s.cumulative_[j + 1] = s.cumulative_[j] + s.weights_[j];
    s.cumulative_.back() = 1.0;
    return s;
  }

  /// Number of intervals (ell).
  std::size_t size() const noexcept { return intervals_.size(); }
  /// Descending intervals, intervals()[0] is [a_1, b_1].
  std::span<const Interval> intervals() const noexcept { return intervals_; }
  std::span<const double> weights() const noexcept { return weights_; }
  /// c_0 = 0, ..., c_ell = 1.
  std::span<const double> cumulative() const noexcept { return cumulative_; }
  /// Atom counts per interval (descending), empty for density measures.
  std::span<const std::size_t> counts() const noexcept { return counts_; }
  double separation() const noexcept { return separation_; }

  double lower(std::size_t j) const { return at(j).a; }  // a_j
  double upper(std::size_t j) const { return at(j).b; }  // b_j
  double weight(std::size_t j) const { return weights_.at(j - 1); }
  double cumulative(std::size_t j) const { return cumulative_.at(j); }

  /// Open gap (b_j, a_{j-1}) above interval j, with a_0 = +infinity.
  std::pair<double, double> gap(std::size_t j) const {
    const double hi = (j == 1) ? std::numeric_limits<double>::infinity() : lower(j - 1);
    return {upper(j), hi};
  }

  /// ceil(n * c_{j-1}): number of components above interval j. Uses exact
  /// atom counts when they describe an n-atom spectrum, and otherwise snaps
  /// n * c to the nearest integer when it is within 1e-6 of one.
  std::size_t components_above(std::size_t n, std::size_t j) const {
    if (j == 0 || j > size()) throw InputError("components_above: bulk index out of range");
    if (!counts_.empty() && std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}) == n) {
      std::size_t above = 0;
      for (std::size_t i = 0; i + 1 < j; ++i) above += counts_[i];
      return above;
    }
    const double x = static_cast<double>(n) * cumulative_.at(j - 1);
    const double r = std::round(x);
    if (std::abs(x - r) < 1e-6) return static_cast<std::size_t>(r);
    return static_cast<std::size_t>(std::ceil(x));
  }

  /// Component index (1-based, descending order) of the i-th value emerging
  /// from the top of interval j: ceil(n c_{j-1}) + i.
  std::size_t bulk_position(std::size_t n, std::size_t j, std::size_t i) const {
    return components_above(n, j) + i;
  }

 private:
  const Interval& at(std::size_t j) const {
    if (j == 0 || j > size()) throw InputError("support profile: interval index out of range");
    return intervals_[j - 1];
  }

  std::vector<Interval> intervals_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
  std::vector<std::size_t> counts_;
  double separation_ = 0.0;
};

namespace detail {

inline double weighted_quantile(std::span<const Atom> sorted, double q) {
  long double total = 0.0L;
  for (const Atom& a : sorted) total += a.weight;
  long double acc = 0.0L;
  for (const Atom& a : sorted) {
    acc += a.weight;
    if (acc >= q * total) return a.location;
  }
  return sorted.back().location;
}

}  // namespace detail

/// Detects the disjoint intervals of a spectral measure. Discrete atoms are
/// split wherever consecutive sorted atoms are more than tau apart; density
/// measures return their stored pieces.
inline SupportProfile detect_support(const SpectralMeasure& m, const SupportConfig& cfg = {}) {
  using Interval = SupportProfile::Interval;
  if (!m.is_discrete()) {
    std::vector<Interval> iv;
    std::vector<double> masses;
    double sep = std::numeric_limits<double>::infinity();
    const auto pieces = m.pieces();
    for (std::size_t j = 0; j < pieces.size(); ++j) {
      iv.push_back({pieces[j].a, pieces[j].b});
      masses.push_back(pieces[j].mass);
      if (j > 0) sep = std::min(sep, pieces[j].a - pieces[j - 1].b);
    }
    return SupportProfile::from_ascending(std::move(iv), std::move(masses), {},
                                          std::isfinite(sep) ? sep : 0.0);
  }

  const auto atoms = m.atoms();
  const std::size_t n = cfg.spacing_count.value_or(atoms.size());
  if (n == 0) throw InputError("detect_support: zero spacing count");
  const double tau = cfg.kappa * m.range() / static_cast<double>(n);

  // Clusters as [begin, end) atom ranges, ascending.
  std::vector<std::pair<std::size_t, std::size_t>> clusters;
  std::size_t begin = 0;
  for (std::size_t i = 1; i < atoms.size(); ++i) {
    if (atoms[i].location - atoms[i - 1].location > tau) {
      clusters.emplace_back(begin, i);
      begin = i;
    }
  }
  clusters.emplace_back(begin, atoms.size());

  if (cfg.min_cluster > 0) {
    auto small = [&](const auto& c) { return c.second - c.first < cfg.min_cluster; };
    if (cfg.small_cluster_policy == SmallClusterPolicy::Error) {
      if (std::any_of(clusters.begin(), clusters.end(), small))
        throw SupportError("detect_support: cluster smaller than min_cluster");
    } else {
      while (clusters.size() > 1) {
        auto it = std::find_if(clusters.begin(), clusters.end(), small);
        if (it == clusters.end()) break;
        const std::size_t k = static_cast<std::size_t>(it - clusters.begin());
        const double gap_below =
            k > 0 ? atoms[clusters[k].first].location - atoms[clusters[k - 1].second - 1].location
                  : std::numeric_limits<double>::infinity();
        const double gap_above = k + 1 < clusters.size()
                                     ? atoms[clusters[k + 1].first].location -
                                           atoms[clusters[k].second - 1].location
                                     : std::numeric_limits<double>::infinity();
        if (gap_below <= gap_above) {
          clusters[k - 1].second = clusters[k].second;
          clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(k));
        } else {
          clusters[k + 1].first = clusters[k].first;
          clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(k));
        }
      }
    }
  }

  std::vector<Interval> iv;
  std::vector<double> masses;
  std::vector<std::size_t> counts;
  for (const auto& [b, e] : clusters) {
    const auto part = atoms.subspan(b, e - b);
    long double mass = 0.0L;
    for (const Atom& a : part) mass += a.weight;
    Interval in{part.front().location, part.back().location};
    if (cfg.edge_estimator == EdgeEstimator::QuantileTrimmed && part.size() > 2) {
      in.a = detail::weighted_quantile(part, cfg.trim_quantile);
      in.b = detail::weighted_quantile(part, 1.0 - cfg.trim_quantile);
    }
    iv.push_back(in);
    masses.push_back(static_cast<double>(mass));
    counts.push_back(e - b);
  }
  return SupportProfile::from_ascending(std::move(iv), std::move(masses), std::move(counts), tau);
}

/// Mean spacing of the `count` + 1 atoms of interval j nearest its upper
/// (`upper_edge`) or lower edge. Returns 0 for density measures or clusters
/// with a single atom.
inline double edge_mean_spacing(const SpectralMeasure& m, const SupportProfile& s, std::size_t j,
                                bool upper_edge, std::size_t count = 20) {
  if (!m.is_discrete()) return 0.0;
  const auto atoms = m.atoms();
  const double lo = s.lower(j), hi = s.upper(j);
  const double slack = s.separation() * 0.5;
  std::vector<double> in;
  for (const Atom& a : atoms)
    if (a.location >= lo - slack && a.location <= hi + slack) in.push_back(a.location);
  if (in.size() < 2) return 0.0;
  const std::size_t k = std::min(count + 1, in.size());
  const double span = upper_edge ? in.back() - in[in.size() - k] : in[k - 1] - in.front();
  return span / static_cast<double>(k - 1);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const SpectralMeasure& m) {
  using nlohmann::json;
  json j;
  if (m.is_discrete()) {
    j["kind"] = "discrete";
    json atoms = json::array();
    for (const Atom& a : m.atoms()) atoms.push_back(json::array({a.location, a.weight}));
    j["atoms"] = std::move(atoms);
  } else {
    j["kind"] = "density";
    json pieces = json::array();
    for (const DensityPiece& p : m.pieces())
      pieces.push_back({{"a", p.a}, {"b", p.b}, {"grid", p.grid}, {"density", p.density}});
    j["pieces"] = std::move(pieces);
  }
  return j;
}

inline SpectralMeasure measure_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "discrete") {
      std::vector<Atom> atoms;
      for (const auto& a : j.at("atoms")) {
        if (!a.is_array() || a.size() != 2) throw InputError("measure json: atom must be [loc, w]");
        atoms.push_back({a[0].get<double>(), a[1].get<double>()});
      }
      return SpectralMeasure::discrete(std::move(atoms));
    }
    if (kind == "density") {
      std::vector<DensityPiece> pieces;
      for (const auto& p : j.at("pieces")) {
        DensityPiece d;
        d.a = p.at("a").get<double>();
        d.b = p.at("b").get<double>();
        d.grid = p.at("grid").get<std::vector<double>>();
        d.density = p.at("density").get<std::vector<double>>();
        pieces.push_back(std::move(d));
      }
      return SpectralMeasure::density(std::move(pieces));
    }
    throw InputError("measure json: unknown kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("measure json: ") + e.what());
  }
}

}  // namespace spectral_inform
