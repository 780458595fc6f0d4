#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "json.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "rmt_predict.hpp"
#include "rng.hpp"
#include "spectra.hpp"

namespace spectral_inform {

/// Source of the noise-only reference: a known singular value spectrum, or a
/// sampler producing noise-only matrices of the data's shape from a seed.
struct NullModel {
  enum class Kind { KnownSpectrum, MonteCarlo };
  Kind kind = Kind::MonteCarlo;
  std::optional<SpectralMeasure> spectrum;
  std::function<Matrix(std::uint64_t)> sampler;
  std::size_t draws = 200;
  std::uint64_t seed = 0;
  std::string description;

  static NullModel known(SpectralMeasure m, std::string description = "known noise spectrum") {
    NullModel n;
    n.kind = Kind::KnownSpectrum;
    n.spectrum = std::move(m);
    n.description = std::move(description);
    return n;
  }
  static NullModel monte_carlo(std::function<Matrix(std::uint64_t)> sampler, std::size_t draws,
                               std::uint64_t seed, std::string description = "monte carlo noise sampler") {
    NullModel n;
    n.kind = Kind::MonteCarlo;
    n.sampler = std::move(sampler);
    n.draws = draws;
    n.seed = seed;
    n.description = std::move(description);
    return n;
  }
};

struct DetectionConfig {
  double alpha = 0.01;
  SupportConfig support = [] {
    SupportConfig s;
    s.min_cluster = 5;
    s.small_cluster_policy = SmallClusterPolicy::MergeNearest;
    return s;
  }();
  /// Threshold as a multiple of the local mean spacing at b_j, used when the
  /// null model carries no calibration draws.
  double fallback_spacing_multiple = 5.0;
  unsigned threads = 0;
};

/// Calibrated reference for one bulk j: its upper edge b_j, the threshold
/// offset t_j and the (descending) position of its first value.
struct BulkThreshold {
  std::size_t j = 0;
  std::size_t above = 0;  // values above bulk j (ceil(n c_{j-1}))
  double edge = 0.0;      // b_j
  double offset = 0.0;    // t_j
  double upper_neighbor = std::numeric_limits<double>::quiet_NaN();  // a_{j-1}
  std::vector<double> null_stats;  // sorted null values at position above + 1
};

struct NullCalibration {
  std::string description;
  std::size_t n = 0;  // number of singular values per draw
  bool calibrated = false;
  std::size_t draws = 0;
  std::size_t consensus_draws = 0;  // draws agreeing with the consensus profile
  std::vector<std::size_t> counts;  // values per bulk, descending
  std::vector<BulkThreshold> bulks;

  std::size_t ell() const noexcept { return bulks.size(); }
};

namespace detail {

inline Vector singular_values(const Matrix& x) { return gram_svd(x).values; }

inline std::size_t order_statistic_rank(std::size_t draws, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("detection: alpha must lie in (0, 1)");
  if (draws < 100) throw InputError("detection: at least 100 calibration draws are required");
  if (static_cast<double>(draws) * alpha < 1.0)
    throw InputError("detection: too few calibration draws for the requested alpha");
  const auto r = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(draws + 1) - 1e-9));
  return std::min(std::max<std::size_t>(r, 1), draws);
}

}  // namespace detail

/// Builds the per-bulk thresholds from the null model.
inline NullCalibration calibrate_null(const NullModel& null, std::size_t n, const DetectionConfig& cfg = {}) {
  if (n < 10) throw InputError("detection: need at least 10 singular values");
  NullCalibration cal;
  cal.description = null.description;
  cal.n = n;
  if (null.kind == NullModel::Kind::KnownSpectrum) {
    if (!null.spectrum) throw InputError("detection: known-spectrum null without a spectrum");
    const SpectralMeasure& m = *null.spectrum;
    const SupportProfile s = detect_support(m, cfg.support);
    for (std::size_t j = 1; j <= s.size(); ++j) {
      BulkThreshold b;
      b.j = j;
      b.above = s.components_above(n, j);
      b.edge = s.upper(j);
      double spacing = edge_mean_spacing(m, s, j, true, 20);
      if (!(spacing > 0.0)) spacing = m.scale() / static_cast<double>(n);
      b.offset = cfg.fallback_spacing_multiple * spacing;
      if (j > 1) b.upper_neighbor = s.lower(j - 1);
      cal.bulks.push_back(std::move(b));
    }
    for (std::size_t j = 1; j <= s.size(); ++j) {
      const std::size_t next = j < s.size() ? s.components_above(n, j + 1) : n;
      cal.counts.push_back(next - s.components_above(n, j));
    }
    return cal;
  }

  if (!null.sampler) throw InputError("detection: monte carlo null without a sampler");
  const std::size_t rank = detail::order_statistic_rank(null.draws, cfg.alpha);
  std::vector<Vector> spectra(null.draws);
  std::vector<std::vector<std::size_t>> counts(null.draws);
  parallel_for(null.draws, cfg.threads, [&](std::size_t k) {
    const Matrix x = null.sampler(derive_seed(null.seed, k, 0x6E756C6CULL));
    spectra[k] = detail::singular_values(x);
    if (static_cast<std::size_t>(spectra[k].size()) != n)
      throw InputError("detection: null draw has " + std::to_string(spectra[k].size()) +
                       " singular values, data has " + std::to_string(n));
    std::vector<double> vals(spectra[k].data(), spectra[k].data() + spectra[k].size());
    const SupportProfile s = detect_support(empirical_measure(vals), cfg.support);
    counts[k].assign(s.counts().begin(), s.counts().end());
  });
  // Consensus: modal number of bulks, then the modal count vector among them.
  std::map<std::size_t, std::size_t> ell_votes;
  for (const auto& c : counts) ++ell_votes[c.size()];
  std::size_t ell = 0, best = 0;
  for (const auto& [l, v] : ell_votes)
    if (v > best) ell = l, best = v;
  std::map<std::vector<std::size_t>, std::size_t> count_votes;
  for (const auto& c : counts)
    if (c.size() == ell) ++count_votes[c];
  best = 0;
  for (const auto& [c, v] : count_votes)
    if (v > best) cal.counts = c, best = v;
  cal.calibrated = true;
  cal.draws = null.draws;
  cal.consensus_draws = best;

  std::size_t above = 0;
  for (std::size_t j = 1; j <= ell; ++j) {
    BulkThreshold b;
    b.j = j;
    b.above = above;
    b.null_stats.reserve(null.draws);
    double upper_sum = 0.0;
    for (const Vector& sp : spectra) {
      b.null_stats.push_back(sp(static_cast<Eigen::Index>(above)));
      if (j > 1) upper_sum += sp(static_cast<Eigen::Index>(above - 1));
    }
    std::sort(b.null_stats.begin(), b.null_stats.end());
    double sum = 0.0;
    for (double v : b.null_stats) sum += v;
    b.edge = sum / static_cast<double>(null.draws);
    b.offset = b.null_stats[rank - 1] - b.edge;
    if (j > 1) b.upper_neighbor = upper_sum / static_cast<double>(null.draws);
    cal.bulks.push_back(std::move(b));
    above += cal.counts[j - 1];
  }
  return cal;
}

enum class FlagStatus { Informative, Ambiguous };

/// One observed value flagged above a bulk edge.
struct GapFlag {
  std::size_t index = 0;  // 1-based descending component index
  std::size_t bulk = 0;   // j: the flag sits above b_j
  double value = 0.0;
  double gap_size = 0.0;  // value - b_j
  double threshold = 0.0; // t_j
  std::optional<double> pvalue;
  FlagStatus status = FlagStatus::Informative;
};

struct DetectionReport {
  std::size_t estimated_rank = 0;
  std::vector<std::size_t> informative_indices;  // ascending
  std::vector<GapFlag> gaps;
  std::string null_reference;
  std::vector<BulkThreshold> thresholds_used;
  std::size_t prefix_rank = 0;  // classical leading-gap rule, for comparison
  std::size_t n = 0;
  std::size_t m = 0;
};

/// Classical rule: number of leading values exceeding sigma_null + threshold.
inline std::size_t prefix_rule_rank(const Vector& values, double sigma_null, double threshold) {
  std::size_t r = 0;
  while (r < static_cast<std::size_t>(values.size()) &&
         values(static_cast<Eigen::Index>(r)) - sigma_null > threshold)
    ++r;
  return r;
}

/// Per-edge decisions on observed singular values (descending) against a
/// calibrated null.
inline DetectionReport detect_from_values(const Vector& values, const NullCalibration& cal) {
  const std::size_t n = static_cast<std::size_t>(values.size());
  if (n < 10) throw InputError("detection: need at least 10 singular values");
  if (n != cal.n) throw InputError("detection: calibration was built for a different dimension");
  DetectionReport rep;
  rep.null_reference = cal.description;
  rep.thresholds_used = cal.bulks;
  for (BulkThreshold& b : rep.thresholds_used) b.null_stats.clear();
  for (std::size_t jj = 0; jj < cal.bulks.size(); ++jj) {
    const BulkThreshold& b = cal.bulks[jj];
    const std::size_t limit = jj < cal.counts.size() ? cal.counts[jj] : n - b.above;
    for (std::size_t i = 1; i <= limit && b.above + i <= n; ++i) {
      const std::size_t idx = b.above + i;
      const double v = values(static_cast<Eigen::Index>(idx - 1));
      if (!(v > b.edge + b.offset)) break;
      GapFlag f;
      f.index = idx;
      f.bulk = b.j;
      f.value = v;
      f.gap_size = v - b.edge;
      f.threshold = b.offset;
      if (!b.null_stats.empty()) {
        const auto ge = b.null_stats.end() - std::lower_bound(b.null_stats.begin(), b.null_stats.end(), v);
        f.pvalue = (static_cast<double>(ge) + 1.0) / (static_cast<double>(b.null_stats.size()) + 1.0);
      }
      if (b.j > 1 && v > b.upper_neighbor - b.offset) f.status = FlagStatus::Ambiguous;
      rep.gaps.push_back(f);
      if (f.status == FlagStatus::Informative) rep.informative_indices.push_back(idx);
    }
  }
  std::sort(rep.informative_indices.begin(), rep.informative_indices.end());
  rep.estimated_rank = rep.informative_indices.size();
  if (!cal.bulks.empty()) rep.prefix_rank = prefix_rule_rank(values, cal.bulks[0].edge, cal.bulks[0].offset);
  rep.n = n;
  return rep;
}

/// Full pipeline on a data matrix (n x m, n <= m is not required).
inline DetectionReport detect_components(const Matrix& data, const NullModel& null, const DetectionConfig& cfg = {}) {
  const Vector values = detail::singular_values(data);
  const NullCalibration cal = calibrate_null(null, static_cast<std::size_t>(values.size()), cfg);
  DetectionReport rep = detect_from_values(values, cal);
  rep.n = static_cast<std::size_t>(data.rows());
  rep.m = static_cast<std::size_t>(data.cols());
  return rep;
}

inline const char* to_string(FlagStatus s) {
  return s == FlagStatus::Informative ? "informative" : "ambiguous";
}

inline nlohmann::json to_json(const DetectionReport& r) {
  using nlohmann::json;
  json gaps = json::array();
  for (const GapFlag& g : r.gaps)
    gaps.push_back({{"index", g.index},
                    {"bulk", g.bulk},
                    {"value", g.value},
                    {"gap_size", g.gap_size},
                    {"threshold", g.threshold},
                    {"pvalue", g.pvalue ? json(*g.pvalue) : json(nullptr)},
                    {"status", to_string(g.status)}});
  json th = json::array();
  for (const BulkThreshold& b : r.thresholds_used)
    th.push_back({{"bulk", b.j},
                  {"first_index", b.above + 1},
                  {"edge", b.edge},
                  {"offset", b.offset},
                  {"upper_neighbor", std::isfinite(b.upper_neighbor) ? json(b.upper_neighbor) : json(nullptr)}});
  return {{"estimated_rank", r.estimated_rank},
          {"informative_indices", r.informative_indices},
          {"gaps", gaps},
          {"null_reference", r.null_reference},
          {"thresholds_used", th},
          {"prefix_rule_rank", r.prefix_rank},
          {"n", r.n},
          {"m", r.m}};
}

// ---------------------------------------------------------------------------
// Estimation

struct SignalComponent {
  std::size_t index = 0;
  double sigma = 0.0;
  Vector u;
  Vector v;
};

struct SignalEstimate {
  std::size_t rank = 0;
  std::vector<SignalComponent> components;
  Matrix reconstruction;
};

struct EstimateOptions {
  /// Maps (sigma, index) to the weight used in the reconstruction; raw sigma
  /// when empty.
  std::function<double(double, std::size_t)> shrinkage;
};

/// Sum of sigma_i u_i v_i^T over the report's informative components.
inline SignalEstimate estimate_signal(const Matrix& data, const DetectionReport& report,
                                      const EstimateOptions& opt = {}) {
  SignalEstimate est;
  est.reconstruction = Matrix::Zero(data.rows(), data.cols());
  if (report.informative_indices.empty()) return est;
  const GramSvd svd = gram_svd(data, true, true);
  for (std::size_t idx : report.informative_indices) {
    if (idx == 0 || idx > static_cast<std::size_t>(svd.values.size()))
      throw InputError("estimate_signal: report does not match the data");
    const Eigen::Index k = static_cast<Eigen::Index>(idx - 1);
    SignalComponent c{idx, svd.values(k), svd.left.col(k), svd.right.col(k)};
    const double w = opt.shrinkage ? opt.shrinkage(c.sigma, idx) : c.sigma;
    est.reconstruction.noalias() += w * c.u * c.v.transpose();
    est.components.push_back(std::move(c));
  }
  est.rank = est.components.size();
  return est;
}

/// |<u~_i, u_k>|^2 for every component i (rows) and planted vector k
/// (columns). Components are left singular vectors (rectangular) or
/// eigenvectors (symmetric), in descending order.
inline Matrix informativeness_profile(const Matrix& data, const SignalModel& truth) {
  if (!truth.has_vectors()) throw InputError("informativeness_profile: planted vectors required");
  if (truth.u.rows() != data.rows()) throw InputError("informativeness_profile: dimension mismatch");
  Matrix basis;
  if (truth.geometry == Geometry::SymmetricEigen) {
    if (data.rows() != data.cols()) throw InputError("informativeness_profile: symmetric data must be square");
    basis = symmetric_eigen(data, true).vectors;
  } else {
    basis = gram_svd(data, true, false).left;
  }
  return (basis.transpose() * truth.u).array().square().matrix();
}

/// Profile from precomputed components (columns of `basis`) and one planted
/// vector.
inline Vector informativeness_profile(const Matrix& basis, const Vector& u) {
  if (basis.rows() != u.size()) throw InputError("informativeness_profile: dimension mismatch");
  return (basis.transpose() * u).array().square().matrix();
}

}  // namespace spectral_inform
