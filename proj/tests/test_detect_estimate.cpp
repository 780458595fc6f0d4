#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "spectral_inform/spectral_inform.hpp"

namespace si = spectral_inform;

namespace {

si::NoiseSpec iid(std::size_t n) {
  si::NoiseSpec ns;
  ns.n = ns.m = n;
  return ns;
}

si::NoiseSpec mixture(std::size_t n) {
  si::NoiseSpec ns;
  ns.kind = si::NoiseKind::CovarianceMixture;
  ns.n = ns.m = n;
  ns.sigma_spectrum = {{20.0, 0.1}, {1.0, 0.9}};
  return ns;
}

si::NullModel null_of(const si::NoiseSpec& ns, std::size_t draws, std::uint64_t seed) {
  return si::NullModel::monte_carlo(
      [ns](std::uint64_t s) {
        si::NoiseSpec c = ns;
        c.seed = s;
        return si::sample_noise(c);
      },
      draws, seed);
}

struct Planted {
  si::Matrix data;
  si::SignalModel sig;
};

Planted plant(si::NoiseSpec ns, double theta, std::uint64_t seed) {
  ns.seed = si::derive_seed(seed, 0, si::kSeedNoise);
  Planted p;
  p.sig.thetas = {theta};
  p.data = si::plant_signal(si::sample_noise(ns), p.sig, si::derive_seed(seed, 0, si::kSeedSignal));
  return p;
}

double relative_error(const si::Matrix& est, const si::Matrix& truth) { return (est - truth).norm() / truth.norm(); }

}  // namespace

TEST(Calibration, RejectsTooFewDraws) {
  const auto ns = iid(50);
  EXPECT_THROW(si::calibrate_null(null_of(ns, 50, 1), 50), si::InputError);
  si::DetectionConfig cfg;
  cfg.alpha = 0.001;
  EXPECT_THROW(si::calibrate_null(null_of(ns, 200, 1), 50, cfg), si::InputError);
}

TEST(Calibration, OrderStatisticThreshold) {
  const auto ns = iid(60);
  si::DetectionConfig cfg;
  cfg.alpha = 0.05;
  const auto cal = si::calibrate_null(null_of(ns, 199, 4), 60, cfg);
  ASSERT_EQ(cal.ell(), 1u);
  ASSERT_EQ(cal.bulks[0].null_stats.size(), 199u);
  // ceil(0.95 * 200) = 190th smallest of 199 draws.
  EXPECT_DOUBLE_EQ(cal.bulks[0].edge + cal.bulks[0].offset, cal.bulks[0].null_stats[189]);
  EXPECT_EQ(cal.counts, std::vector<std::size_t>{60});
}

TEST(Calibration, KnownSpectrumUsesSpacingFallback) {
  std::vector<double> v;
  for (int k = 0; k < 100; ++k) v.push_back(0.01 * k);
  const auto cal = si::calibrate_null(si::NullModel::known(si::empirical_measure(v)), 100);
  ASSERT_EQ(cal.ell(), 1u);
  EXPECT_FALSE(cal.calibrated);
  EXPECT_NEAR(cal.bulks[0].edge, 0.99, 1e-12);
  EXPECT_NEAR(cal.bulks[0].offset, 5 * 0.01, 1e-12);
}

TEST(Detect, SingleBulkPrincipalSpike) {
  const std::size_t n = 500;
  const auto p = plant(iid(n), 2.0, 1);
  const auto rep = si::detect_components(p.data, null_of(iid(n), 100, 77));
  EXPECT_EQ(rep.estimated_rank, 1u);
  EXPECT_EQ(rep.informative_indices, std::vector<std::size_t>{1});
  EXPECT_EQ(rep.prefix_rank, 1u);
  ASSERT_EQ(rep.gaps.size(), 1u);
  ASSERT_TRUE(rep.gaps[0].pvalue.has_value());
  EXPECT_NEAR(*rep.gaps[0].pvalue, 1.0 / 101.0, 1e-12);
  EXPECT_EQ(rep.n, n);
}

TEST(Detect, MixtureMiddleSpikeRegression) {
  const std::size_t n = 500;
  const auto p = plant(mixture(n), 2.0, 3);
  const auto rep = si::detect_components(p.data, null_of(mixture(n), 100, 78));
  EXPECT_EQ(rep.estimated_rank, 1u);
  EXPECT_EQ(rep.informative_indices, std::vector<std::size_t>{51});
  EXPECT_EQ(rep.prefix_rank, 0u);
  ASSERT_EQ(rep.thresholds_used.size(), 2u);
  EXPECT_EQ(rep.thresholds_used[1].above, 50u);
  const auto j = si::to_json(rep);
  EXPECT_EQ(j["informative_indices"][0], 51);
  EXPECT_EQ(j["prefix_rule_rank"], 0);
}

TEST(Detect, NoiseOnlyFalseAlarmRate) {
  // The order-statistic threshold has exact level (draws - k + 1) / (draws + 1)
  // <= alpha per bulk, so the population rate of r = 0 is at least 1 - ell * alpha.
  // A 200-trial measurement of an exact-level test sits on that boundary, so the
  // sample count is checked against Binomial(200, ell * alpha) instead, next to
  // the hard sanity bound rate >= 1 - 2 ell alpha.
  const std::size_t n = 100;
  si::DetectionConfig cfg;
  cfg.alpha = 0.05;
  for (const auto& ns : {iid(n), mixture(n)}) {
    const auto cal = si::calibrate_null(null_of(ns, 200, 5), n, cfg);
    std::size_t zero = 0;
    for (std::uint64_t t = 0; t < 200; ++t) {
      si::NoiseSpec s = ns;
      s.seed = si::derive_seed(900, t, 1);
      if (si::detect_from_values(si::gram_svd(si::sample_noise(s)).values, cal).estimated_rank == 0) ++zero;
    }
    const double rate = zero / 200.0;
    const double level = static_cast<double>(cal.ell()) * cfg.alpha;
    std::printf("%s: ell = %zu, r = 0 rate %.3f (nominal >= %.3f)\n", si::to_string(ns.kind), cal.ell(), rate,
                1.0 - level);
    const std::size_t k = si::detail::order_statistic_rank(200, cfg.alpha);
    EXPECT_LE(static_cast<double>(200 - k + 1) / 201.0, cfg.alpha);
    EXPECT_GE(rate, 1.0 - 2.0 * level);
    // P(X >= alarms) for X ~ Binomial(200, level) must not be below 0.001.
    const int alarms = 200 - static_cast<int>(zero);
    double tail = 0.0;
    for (int x = alarms; x <= 200; ++x)
      tail += std::exp(std::lgamma(201.0) - std::lgamma(x + 1.0) - std::lgamma(201.0 - x) + x * std::log(level) +
                       (200 - x) * std::log1p(-level));
    EXPECT_GE(tail, 1e-3) << alarms << " false alarms";
  }
}

TEST(Detect, AmbiguousFlagNearUpperBulk) {
  si::NullCalibration cal;
  cal.n = 12;
  cal.counts = {2, 10};
  si::BulkThreshold b1;
  b1.j = 1;
  b1.edge = 10.0;
  b1.offset = 0.5;
  si::BulkThreshold b2;
  b2.j = 2;
  b2.above = 2;
  b2.edge = 2.0;
  b2.offset = 0.5;
  b2.upper_neighbor = 8.0;
  cal.bulks = {b1, b2};
  si::Vector v(12);
  v << 9.9, 8.5, 7.8, 4.0, 1.9, 1.8, 1.5, 1.2, 1.0, 0.8, 0.5, 0.1;
  const auto rep = si::detect_from_values(v, cal);
  ASSERT_EQ(rep.gaps.size(), 2u);
  EXPECT_EQ(rep.gaps[0].index, 3u);
  EXPECT_EQ(rep.gaps[0].status, si::FlagStatus::Ambiguous);
  EXPECT_EQ(rep.gaps[1].status, si::FlagStatus::Informative);
  EXPECT_EQ(rep.informative_indices, std::vector<std::size_t>{4});
  EXPECT_EQ(rep.estimated_rank, 1u);
  EXPECT_EQ(rep.prefix_rank, 0u);
}

TEST(Detect, DimensionMismatch) {
  const auto cal = si::calibrate_null(null_of(iid(40), 100, 1), 40);
  EXPECT_THROW(si::detect_from_values(si::Vector::Ones(30), cal), si::InputError);
  EXPECT_THROW(si::detect_from_values(si::Vector::Ones(5), cal), si::InputError);
}

TEST(PrefixRule, CountsLeadingValues) {
  si::Vector v(5);
  v << 5.0, 4.0, 1.0, 3.9, 0.5;
  EXPECT_EQ(si::prefix_rule_rank(v, 2.0, 1.0), 2u);
  EXPECT_EQ(si::prefix_rule_rank(v, 6.0, 1.0), 0u);
}

TEST(Estimate, EmptyReportGivesZero) {
  const auto p = plant(iid(50), 1.0, 2);
  si::DetectionReport rep;
  const auto est = si::estimate_signal(p.data, rep);
  EXPECT_EQ(est.rank, 0u);
  EXPECT_EQ(est.reconstruction.norm(), 0.0);
}

TEST(Estimate, StrongSpikeIsRecovered) {
  const std::size_t n = 400;
  const auto p = plant(iid(n), 10.0, 6);
  const auto rep = si::detect_components(p.data, null_of(iid(n), 100, 79));
  ASSERT_EQ(rep.informative_indices, std::vector<std::size_t>{1});
  const auto est = si::estimate_signal(p.data, rep);
  ASSERT_EQ(est.rank, 1u);
  const double overlap = std::pow(est.components[0].u.dot(p.sig.u.col(0)), 2);
  EXPECT_GE(overlap, 0.95);
  EXPECT_LT(relative_error(est.reconstruction, p.sig.matrix()), 0.35);
  // Bounded by the predicted overlap on the quarter-circle law (0.99 at theta = 10).
  EXPECT_NEAR(overlap, 1.0 - 101.0 / (100.0 * 101.0), 0.02);
}

TEST(Estimate, ShrinkageHook) {
  const auto p = plant(iid(60), 5.0, 7);
  si::DetectionReport rep;
  rep.informative_indices = {1};
  si::EstimateOptions opt;
  opt.shrinkage = [](double, std::size_t) { return 0.0; };
  EXPECT_EQ(si::estimate_signal(p.data, rep, opt).reconstruction.norm(), 0.0);
  rep.informative_indices = {100};
  EXPECT_THROW(si::estimate_signal(p.data, rep), si::InputError);
}

TEST(Estimate, MiddleComponentBeatsPrincipal) {
  const std::size_t n = 400, trials = 100;
  double err_middle = 0.0, err_principal = 0.0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const auto p = plant(mixture(n), 2.0, 1000 + t);
    const si::Matrix s = p.sig.matrix();
    si::DetectionReport middle, principal;
    middle.informative_indices = {41};
    principal.informative_indices = {1};
    err_middle += relative_error(si::estimate_signal(p.data, middle).reconstruction, s);
    err_principal += relative_error(si::estimate_signal(p.data, principal).reconstruction, s);
  }
  std::printf("mean relative error: middle %.3f principal %.3f\n", err_middle / trials, err_principal / trials);
  EXPECT_LT(err_middle, err_principal);
}

TEST(Informativeness, IndicatorForExactComponent) {
  const auto p = plant(iid(40), 1.0, 8);
  const si::GramSvd svd = si::gram_svd(p.data, true, false);
  const si::Vector prof = si::informativeness_profile(svd.left, svd.left.col(2));
  for (Eigen::Index i = 0; i < prof.size(); ++i) EXPECT_NEAR(prof(i), i == 2 ? 1.0 : 0.0, 1e-12);
}

TEST(Informativeness, ProfilesPeakWhereExpected) {
  const std::size_t n = 500;
  const auto a = plant(iid(n), 2.0, 9);
  const si::Matrix pa = si::informativeness_profile(a.data, a.sig);
  Eigen::Index top = 0;
  pa.col(0).maxCoeff(&top);
  EXPECT_EQ(top, 0);
  EXPECT_GT(pa(0, 0), 0.5);
  const auto b = plant(mixture(n), 2.0, 10);
  const si::Matrix pb = si::informativeness_profile(b.data, b.sig);
  pb.col(0).maxCoeff(&top);
  EXPECT_EQ(top, 50);
  EXPECT_LT(pb(0, 0), 20.0 / n);
  EXPECT_NEAR(pb.col(0).sum(), 1.0, 1e-10);
}
