#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "detect_estimate.hpp"
#include "errors.hpp"
#include "json.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "rmt_predict.hpp"
#include "rng.hpp"
#include "spectra.hpp"
#include "transforms.hpp"

namespace spectral_inform {

enum class NoiseKind { IidGaussian, CovarianceMixture, SymmetricWigner };

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::IidGaussian: return "iid_gaussian";
    case NoiseKind::CovarianceMixture: return "covariance_mixture";
    case NoiseKind::SymmetricWigner: return "symmetric_wigner";
  }
  return "?";
}

/// Noise ensemble. IidGaussian: n x m with N(0, 1/m) entries.
/// CovarianceMixture: the same with column k scaled by sqrt(Sigma_kk), Sigma
/// diagonal with the listed values over the listed fractions of the m columns
/// (in list order). SymmetricWigner: (A + A^T) / sqrt(2n), A n x n standard
/// normal, bulk on [-2, 2].
struct NoiseSpec {
  NoiseKind kind = NoiseKind::IidGaussian;
  std::size_t n = 1000;
  std::size_t m = 1000;
  std::vector<std::pair<double, double>> sigma_spectrum;  // (value, fraction)
  std::uint64_t seed = 0;

  void validate() const {
    if (n == 0 || m == 0) throw InputError("noise spec: dimensions must be positive");
    if (n > m) throw InputError("noise spec: need n <= m");
    if (kind == NoiseKind::SymmetricWigner && n != m) throw InputError("noise spec: Wigner noise needs n == m");
    if (kind == NoiseKind::CovarianceMixture) {
      if (sigma_spectrum.empty()) throw InputError("noise spec: empty covariance spectrum");
      double total = 0.0;
      for (const auto& [value, fraction] : sigma_spectrum) {
        if (!(value > 0.0) || !std::isfinite(value)) throw InputError("noise spec: variances must be positive");
        if (!(fraction > 0.0)) throw InputError("noise spec: fractions must be positive");
        total += fraction;
      }
      if (std::abs(total - 1.0) > 1e-9) throw InputError("noise spec: fractions must sum to 1");
    }
  }
};

/// Column counts per covariance value (largest-remainder rounding of
/// fraction x m).
inline std::vector<std::size_t> mixture_counts(const NoiseSpec& spec) {
  const std::size_t k = spec.sigma_spectrum.size();
  std::vector<std::size_t> counts(k);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = spec.sigma_spectrum[i].second * static_cast<double>(spec.m);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += counts[i];
    remainders.emplace_back(-(exact - static_cast<double>(counts[i])), i);
  }
  std::stable_sort(remainders.begin(), remainders.end());
  for (std::size_t r = 0; assigned < spec.m; ++r, ++assigned) ++counts[remainders[r % k].second];
  return counts;
}

inline Matrix sample_noise(const NoiseSpec& spec) {
  spec.validate();
  GaussianStream rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.n), m = static_cast<Eigen::Index>(spec.m);
  switch (spec.kind) {
    case NoiseKind::IidGaussian: return rng.matrix(n, m, 1.0 / std::sqrt(static_cast<double>(m)));
    case NoiseKind::CovarianceMixture: {
      Matrix x = rng.matrix(n, m, 1.0 / std::sqrt(static_cast<double>(m)));
      const auto counts = mixture_counts(spec);
      Eigen::Index col = 0;
      for (std::size_t i = 0; i < counts.size(); ++i) {
        const double s = std::sqrt(spec.sigma_spectrum[i].first);
        for (std::size_t c = 0; c < counts[i]; ++c, ++col) x.col(col) *= s;
      }
      return x;
    }
    case NoiseKind::SymmetricWigner: {
      const Matrix a = rng.matrix(n, n);
      return (a + a.transpose()) / std::sqrt(2.0 * static_cast<double>(n));
    }
  }
  throw InputError("sample_noise: unknown noise kind");
}

/// Draws planted vectors for `sig` (Gaussian, then Gram-Schmidt) when absent.
inline void draw_signal_vectors(SignalModel& sig, std::size_t n, std::size_t m, std::uint64_t seed) {
  const std::size_t r = sig.rank();
  if (2 * r >= std::min(n, m)) throw InputError("plant_signal: rank too large for the dimensions");
  GaussianStream rng(seed);
  sig.u = rng.matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
  orthonormalize_columns(sig.u);
  if (sig.geometry == Geometry::RectangularSVD) {
    sig.v = rng.matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(r));
    orthonormalize_columns(sig.v);
  } else {
    sig.v.resize(0, 0);
  }
}

/// X~ = sum_i theta_i u_i v_i^T + X. Vectors are drawn from `seed` when the
/// model carries none; strengths may be zero.
inline Matrix plant_signal(const Matrix& noise, SignalModel& sig, std::uint64_t seed) {
  if (sig.thetas.empty()) throw InputError("plant_signal: empty signal model");
  for (std::size_t i = 0; i < sig.thetas.size(); ++i)
    if (!(sig.thetas[i] >= 0.0) || (i > 0 && sig.thetas[i] > sig.thetas[i - 1]))
      throw InputError("plant_signal: strengths must be non-negative and descending");
  const auto n = static_cast<std::size_t>(noise.rows()), m = static_cast<std::size_t>(noise.cols());
  if (sig.geometry == Geometry::SymmetricEigen && n != m) throw InputError("plant_signal: symmetric model needs square noise");
  if (!sig.has_vectors()) draw_signal_vectors(sig, n, m, seed);
  const Matrix& right = sig.geometry == Geometry::SymmetricEigen ? sig.u : sig.v;
  if (static_cast<std::size_t>(sig.u.rows()) != n || static_cast<std::size_t>(right.rows()) != m)
    throw InputError("plant_signal: vector dimensions do not match the noise");
  Matrix out = noise;
  for (std::size_t i = 0; i < sig.rank(); ++i) {
    if (sig.thetas[i] == 0.0) continue;
    const auto k = static_cast<Eigen::Index>(i);
    out.noalias() += sig.thetas[i] * sig.u.col(k) * right.col(k).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentSpec {
  NoiseSpec noise;
  /// One signal (descending strengths) per grid point.
  std::vector<std::vector<double>> signals;
  std::size_t trials = 250;
  std::uint64_t master_seed = 0;
  unsigned threads = 0;
  bool predict = true;
  bool detect = false;
  DetectionConfig detection;
  std::size_t null_draws = 200;
  SupportConfig support = DetectionConfig{}.support;
  /// Leading components whose values and informativeness are written out.
  std::size_t record_components = 256;
  /// Upper bound on n * m * trials * grid points.
  double max_work = 2e11;

  Geometry geometry() const {
    return noise.kind == NoiseKind::SymmetricWigner ? Geometry::SymmetricEigen : Geometry::RectangularSVD;
  }

  void validate() const {
    noise.validate();
    if (trials == 0) throw InputError("experiment: trials must be at least 1");
    if (signals.empty()) throw InputError("experiment: no signal grid points");
    for (const auto& s : signals)
      if (s.empty()) throw InputError("experiment: empty signal at a grid point");
    const double work = static_cast<double>(noise.n) * static_cast<double>(noise.m) *
                        static_cast<double>(trials) * static_cast<double>(signals.size());
    if (work > max_work)
      throw InputError("experiment: n*m*trials*grid = " + std::to_string(work) + " exceeds the resource guard");
    if (detect && geometry() == Geometry::SymmetricEigen)
      throw InputError("experiment: detection runs on singular values of rectangular data");
  }
};

/// Per-trial seeds. The noise and the planted vectors of trial t are shared by
/// every grid point (common random numbers).
enum SeedPurpose : std::uint64_t { kSeedNoise = 1, kSeedSignal = 2, kSeedNull = 3 };

struct TrialResult {
  std::size_t trial = 0;
  std::size_t grid_index = 0;
  std::vector<double> thetas;
  std::uint64_t noise_seed = 0;
  std::uint64_t signal_seed = 0;
  Vector values;           // observed eigen/singular values, descending
  Vector informativeness;  // |<u~_i, u_1>|^2 per component
  std::vector<std::size_t> noise_counts;  // noise support: values per bulk, descending
  std::vector<double> noise_edges;        // b_1, a_1, b_2, a_2, ...
  std::vector<OutlierPrediction> predictions;
  std::optional<DetectionReport> detection;
};

struct GridSummary {
  std::size_t grid_index = 0;
  std::vector<double> thetas;
  std::size_t trials = 0;
  Vector mean_values, sd_values;
  Vector mean_informativeness, sd_informativeness;
  struct Bulk {
    std::size_t j = 0;
    std::size_t position = 0;  // reference component index above bulk j
    double mean_informativeness = 0.0, sd_informativeness = 0.0;
    double mean_value = 0.0;
    std::size_t predicted_trials = 0;
    double mean_threshold = std::numeric_limits<double>::quiet_NaN();  // lower threshold, theta units
    double outlier_fraction = 0.0;
    double mean_rho = std::numeric_limits<double>::quiet_NaN();
    double mean_predicted_overlap = std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<Bulk> bulks;
  double mean_estimated_rank = std::numeric_limits<double>::quiet_NaN();
  double middle_detection_rate = std::numeric_limits<double>::quiet_NaN();
  double prefix_zero_rate = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentResult {
  std::vector<TrialResult> trials;  // sorted by (trial, grid_index)
  std::vector<std::size_t> reference_counts;
  std::vector<GridSummary> summary;
  std::optional<NullCalibration> calibration;
};

namespace detail {

inline std::vector<std::size_t> consensus_counts(const std::vector<std::vector<std::size_t>>& all) {
  std::map<std::size_t, std::size_t> ell_votes;
  for (const auto& c : all) ++ell_votes[c.size()];
  std::size_t ell = 0, best = 0;
  for (const auto& [l, v] : ell_votes)
    if (v > best) ell = l, best = v;
  std::map<std::vector<std::size_t>, std::size_t> votes;
  for (const auto& c : all)
    if (c.size() == ell) ++votes[c];
  std::vector<std::size_t> out;
  best = 0;
  for (const auto& [c, v] : votes)
    if (v > best) out = c, best = v;
  return out;
}

inline std::pair<double, double> mean_sd(const std::vector<double>& x) {
  if (x.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  long double s = 0.0L;
  for (double v : x) s += v;
  const double mean = static_cast<double>(s / x.size());
  long double q = 0.0L;
  for (double v : x) q += (v - mean) * (v - mean);
  const double sd = x.size() > 1 ? std::sqrt(static_cast<double>(q / (x.size() - 1))) : 0.0;
  return {mean, sd};
}

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace detail

/// Runs every trial of the experiment. Results depend only on the spec (and
/// its master seed), not on the number of workers.
inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const Geometry geom = spec.geometry();
  const std::size_t n = spec.noise.n, m = spec.noise.m;
  const std::size_t grid = spec.signals.size();

  ExperimentResult result;
  if (spec.detect) {
    NoiseSpec ns = spec.noise;
    NullModel null = NullModel::monte_carlo(
        [ns](std::uint64_t seed) mutable {
          NoiseSpec s = ns;
          s.seed = seed;
          return sample_noise(s);
        },
        spec.null_draws, derive_seed(spec.master_seed, 0, kSeedNull),
        std::string("monte carlo ") + to_string(spec.noise.kind) + " noise");
    DetectionConfig dc = spec.detection;
    dc.threads = spec.threads;
    result.calibration = calibrate_null(null, std::min(n, m), dc);
  }

  std::vector<std::vector<TrialResult>> per_trial(spec.trials);
  parallel_for(spec.trials, spec.threads, [&](std::size_t t) {
    NoiseSpec ns = spec.noise;
    ns.seed = derive_seed(spec.master_seed, t, kSeedNoise);
    const std::uint64_t signal_seed = derive_seed(spec.master_seed, t, kSeedSignal);
    const Matrix x = sample_noise(ns);

    // Noise spectrum and its support.
    const Vector noise_values = geom == Geometry::SymmetricEigen ? symmetric_eigen(x, false).values
                                                                 : gram_svd(x).values;
    const std::vector<double> nv = detail::to_std(noise_values);
    const SpectralMeasure noise_measure = empirical_measure(nv);
    std::optional<SupportProfile> support;
    try {
      support = detect_support(noise_measure, spec.support);
    } catch (const SupportError&) {
    }

    auto& out = per_trial[t];
    out.reserve(grid);
    for (std::size_t g = 0; g < grid; ++g) {
      TrialResult r;
      r.trial = t;
      r.grid_index = g;
      r.thetas = spec.signals[g];
      r.noise_seed = ns.seed;
      r.signal_seed = signal_seed;
      SignalModel sig;
      sig.geometry = geom;
      sig.thetas = spec.signals[g];
      const Matrix data = plant_signal(x, sig, signal_seed);
      Matrix basis;
      if (geom == Geometry::SymmetricEigen) {
        SymmetricEigensystem es = symmetric_eigen(data, true);
        r.values = std::move(es.values);
        basis = std::move(es.vectors);
      } else {
        GramSvd svd = gram_svd(data, true, false);
        r.values = std::move(svd.values);
        basis = std::move(svd.left);
      }
      r.informativeness = informativeness_profile(basis, Vector(sig.u.col(0)));
      if (support) {
        r.noise_counts.assign(support->counts().begin(), support->counts().end());
        for (std::size_t j = 1; j <= support->size(); ++j) {
          r.noise_edges.push_back(support->upper(j));
          r.noise_edges.push_back(support->lower(j));
        }
        if (spec.predict) {
          SignalModel pure;
          pure.geometry = geom;
          pure.thetas = sig.thetas;
          bool positive = std::all_of(pure.thetas.begin(), pure.thetas.end(), [](double v) { return v > 0.0; });
          if (positive) {
            r.predictions = geom == Geometry::SymmetricEigen
                                ? predict_eigen_outliers(noise_measure, *support, pure)
                                : predict_sv_outliers(noise_measure, *support, AspectRatio::of(n, m), pure);
          }
        }
      }
      if (result.calibration) r.detection = detect_from_values(r.values, *result.calibration);
      if (r.detection) {
        r.detection->n = n;
        r.detection->m = m;
      }
      out.push_back(std::move(r));
    }
  });
  for (auto& v : per_trial)
    for (auto& r : v) result.trials.push_back(std::move(r));

  // Reference bulk positions: consensus of the per-trial noise supports.
  std::vector<std::vector<std::size_t>> all_counts;
  for (const TrialResult& r : result.trials)
    if (r.grid_index == 0 && !r.noise_counts.empty()) all_counts.push_back(r.noise_counts);
  result.reference_counts = detail::consensus_counts(all_counts);

  const std::size_t ncomp = std::min(n, m);
  for (std::size_t g = 0; g < grid; ++g) {
    GridSummary s;
    s.grid_index = g;
    s.thetas = spec.signals[g];
    std::vector<const TrialResult*> rows;
    for (const TrialResult& r : result.trials)
      if (r.grid_index == g) rows.push_back(&r);
    s.trials = rows.size();
    s.mean_values = Vector::Zero(static_cast<Eigen::Index>(ncomp));
    s.mean_informativeness = Vector::Zero(static_cast<Eigen::Index>(ncomp));
    s.sd_values = Vector::Zero(static_cast<Eigen::Index>(ncomp));
    s.sd_informativeness = Vector::Zero(static_cast<Eigen::Index>(ncomp));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ncomp); ++i) {
      std::vector<double> a, b;
      for (const TrialResult* r : rows) {
        a.push_back(r->values(i));
        b.push_back(r->informativeness(i));
      }
      std::tie(s.mean_values(i), s.sd_values(i)) = detail::mean_sd(a);
      std::tie(s.mean_informativeness(i), s.sd_informativeness(i)) = detail::mean_sd(b);
    }
    std::size_t above = 0;
    for (std::size_t j = 1; j <= result.reference_counts.size(); ++j) {
      GridSummary::Bulk b;
      b.j = j;
      b.position = above + 1;
      above += result.reference_counts[j - 1];
      const auto p = static_cast<Eigen::Index>(b.position - 1);
      b.mean_informativeness = s.mean_informativeness(p);
      b.sd_informativeness = s.sd_informativeness(p);
      b.mean_value = s.mean_values(p);
      std::vector<double> th, rho, ov;
      std::size_t outliers = 0;
      for (const TrialResult* r : rows) {
        if (r->noise_counts != result.reference_counts) continue;
        for (const OutlierPrediction& pr : r->predictions) {
          if (pr.j != j || pr.i != 1) continue;
          th.push_back(pr.threshold_lower);
          if (pr.regime == Regime::Outlier) {
            ++outliers;
            rho.push_back(pr.rho);
            if (pr.overlap_left) ov.push_back(*pr.overlap_left);
          }
        }
      }
      b.predicted_trials = th.size();
      if (!th.empty()) {
        b.mean_threshold = detail::mean_sd(th).first;
        b.outlier_fraction = static_cast<double>(outliers) / static_cast<double>(th.size());
      }
      if (!rho.empty()) b.mean_rho = detail::mean_sd(rho).first;
      if (!ov.empty()) b.mean_predicted_overlap = detail::mean_sd(ov).first;
      s.bulks.push_back(b);
    }
    if (spec.detect) {
      double rank_sum = 0.0;
      std::size_t middle = 0, prefix_zero = 0;
      const std::size_t top = result.reference_counts.empty() ? 0 : result.reference_counts[0];
      for (const TrialResult* r : rows) {
        const DetectionReport& d = *r->detection;
        rank_sum += static_cast<double>(d.estimated_rank);
        if (d.estimated_rank == 1 && d.informative_indices[0] > top) ++middle;
        if (d.prefix_rank == 0) ++prefix_zero;
      }
      s.mean_estimated_rank = rank_sum / static_cast<double>(rows.size());
      s.middle_detection_rate = static_cast<double>(middle) / static_cast<double>(rows.size());
      s.prefix_zero_rate = static_cast<double>(prefix_zero) / static_cast<double>(rows.size());
    }
    result.summary.push_back(std::move(s));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const NoiseSpec& s) {
  nlohmann::json j = {{"kind", to_string(s.kind)}, {"n", s.n}, {"m", s.m}};
  if (s.kind == NoiseKind::CovarianceMixture) {
    nlohmann::json spec = nlohmann::json::array();
    for (const auto& [v, f] : s.sigma_spectrum) spec.push_back({{"value", v}, {"fraction", f}});
    j["sigma_spectrum"] = spec;
  }
  return j;
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "iid_gaussian" || s == "iid") return NoiseKind::IidGaussian;
  if (s == "covariance_mixture" || s == "mixture") return NoiseKind::CovarianceMixture;
  if (s == "symmetric_wigner" || s == "wigner") return NoiseKind::SymmetricWigner;
  throw InputError("unknown noise kind '" + s + "'");
}

inline ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  try {
    ExperimentSpec e;
    const auto& nz = j.at("noise");
    e.noise.kind = noise_kind_from_string(nz.at("kind").get<std::string>());
    e.noise.n = nz.at("n").get<std::size_t>();
    e.noise.m = nz.value("m", e.noise.n);
    if (nz.contains("sigma_spectrum"))
      for (const auto& p : nz.at("sigma_spectrum"))
        e.noise.sigma_spectrum.emplace_back(p.at("value").get<double>(), p.at("fraction").get<double>());
    for (const auto& s : j.at("signals")) {
      if (s.is_number())
        e.signals.push_back({s.get<double>()});
      else
        e.signals.push_back(s.get<std::vector<double>>());
    }
    e.trials = j.value("trials", e.trials);
    e.master_seed = j.value("seed", e.master_seed);
    e.predict = j.value("predict", e.predict);
    e.detect = j.value("detect", e.detect);
    e.detection.alpha = j.value("alpha", e.detection.alpha);
    e.support.kappa = j.value("kappa", e.support.kappa);
    e.detection.support.kappa = e.support.kappa;
    e.null_draws = j.value("null_draws", e.null_draws);
    e.record_components = j.value("record_components", e.record_components);
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("experiment json: ") + ex.what());
  }
}

inline nlohmann::json to_json(const TrialResult& r, std::size_t record) {
  using nlohmann::json;
  const auto k = static_cast<Eigen::Index>(std::min<std::size_t>(record, static_cast<std::size_t>(r.values.size())));
  json preds = json::array();
  for (const OutlierPrediction& p : r.predictions) preds.push_back(to_json(p));
  json j = {{"trial", r.trial},
            {"grid_index", r.grid_index},
            {"thetas", r.thetas},
            {"noise_seed", r.noise_seed},
            {"signal_seed", r.signal_seed},
            {"rng", kGaussianStreamName},
            {"values", detail::to_std(r.values.head(k))},
            {"informativeness", detail::to_std(r.informativeness.head(k))},
            {"noise_support", {{"counts", r.noise_counts}, {"edges", r.noise_edges}}},
            {"predictions", preds}};
  if (r.detection) j["detection"] = to_json(*r.detection);
  return j;
}

inline void write_jsonl(std::ostream& os, const ExperimentResult& res, std::size_t record) {
  for (const TrialResult& r : res.trials) os << to_json(r, record).dump() << '\n';
}

namespace detail {
inline std::string csv_number(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return nlohmann::json(x).dump();
}
}  // namespace detail

/// One row per (grid point, bulk).
inline void write_summary_csv(std::ostream& os, const ExperimentResult& res) {
  os << "grid_index,theta,trials,bulk,position,mean_informativeness,sd_informativeness,mean_value,"
        "predicted_trials,mean_threshold,outlier_fraction,mean_rho,mean_predicted_overlap,"
        "mean_estimated_rank,middle_detection_rate,prefix_zero_rate\n";
  for (const GridSummary& s : res.summary) {
    for (const GridSummary::Bulk& b : s.bulks) {
      os << s.grid_index << ',' << detail::csv_number(s.thetas.front()) << ',' << s.trials << ',' << b.j << ','
         << b.position << ',' << detail::csv_number(b.mean_informativeness) << ','
         << detail::csv_number(b.sd_informativeness) << ',' << detail::csv_number(b.mean_value) << ','
         << b.predicted_trials << ',' << detail::csv_number(b.mean_threshold) << ','
         << detail::csv_number(b.outlier_fraction) << ',' << detail::csv_number(b.mean_rho) << ','
         << detail::csv_number(b.mean_predicted_overlap) << ',' << detail::csv_number(s.mean_estimated_rank) << ','
         << detail::csv_number(s.middle_detection_rate) << ',' << detail::csv_number(s.prefix_zero_rate) << '\n';
    }
  }
}

}  // namespace spectral_inform
