#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "spectral_inform/spectral_inform.hpp"

namespace si = spectral_inform;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

si::SignalModel eigen_model(std::vector<double> thetas) {
  si::SignalModel s;
  s.geometry = si::Geometry::SymmetricEigen;
  s.thetas = std::move(thetas);
  return s;
}

si::SignalModel sv_model(std::vector<double> thetas) {
  si::SignalModel s;
  s.thetas = std::move(thetas);
  return s;
}

si::SpectralMeasure semicircle() {
  return si::SpectralMeasure::density({si::tabulate_piece(-2.0, 2.0, oracle::semicircle_density)});
}

// Closed-form Cauchy transform of a semicircle with center c and radius r.
double semicircle_G(double z, double c, double r) {
  const double w = z - c;
  return 2.0 * (w - std::copysign(std::sqrt(w * w - r * r), w)) / (r * r);
}

// Two bulks: mass 0.9 semicircle on [0, 1], mass 0.1 semicircle on [5, 6].
double two_bulk_G(double z) { return 0.9 * semicircle_G(z, 0.5, 0.5) + 0.1 * semicircle_G(z, 5.5, 0.5); }

si::SpectralMeasure two_bulk() {
  auto sc = [](double c, double r) {
    return [c, r](double x) {
      const double w = x - c;
      return w * w >= r * r ? 0.0 : std::sqrt(r * r - w * w);
    };
  };
  return si::SpectralMeasure::density({si::tabulate_piece(0.0, 1.0, sc(0.5, 0.5), 0.9),
                                       si::tabulate_piece(5.0, 6.0, sc(5.5, 0.5), 0.1)});
}

si::Vector unit_vector(si::GaussianStream& g, Eigen::Index n) {
  si::Vector u = g.vector(n);
  return u / u.norm();
}

si::Matrix wigner(std::size_t n, std::uint64_t seed) {
  si::NoiseSpec ns;
  ns.kind = si::NoiseKind::SymmetricWigner;
  ns.n = ns.m = n;
  ns.seed = seed;
  return si::sample_noise(ns);
}

}  // namespace

TEST(PredictEigen, SemicircleOutlier) {
  const auto m = semicircle();
  const auto s = si::detect_support(m);
  const auto ref = oracle::semicircle_spike(2.0);
  ASSERT_NEAR(ref.rho, 2.5, 1e-6);
  ASSERT_NEAR(ref.overlap, 0.75, 1e-6);
  const auto p = si::predict_eigen_outliers(m, s, eigen_model({2.0}));
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].regime, si::Regime::Outlier);
  EXPECT_NEAR(p[0].rho, ref.rho, 1e-4);
  ASSERT_TRUE(p[0].overlap_left.has_value());
  EXPECT_NEAR(*p[0].overlap_left, ref.overlap, 1e-4);
  EXPECT_NEAR(p[0].threshold_lower, 1.0, 1e-3);
  EXPECT_TRUE(std::isinf(p[0].threshold_upper));
}

TEST(PredictEigen, SemicircleBelowThresholdIsStuck) {
  const auto m = semicircle();
  const auto p = si::predict_eigen_outliers(m, si::detect_support(m), eigen_model({0.9}));
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].regime, si::Regime::StuckAtLowerEdge);
  ASSERT_TRUE(p[0].overlap_left.has_value());
  EXPECT_EQ(*p[0].overlap_left, 0.0);
  EXPECT_TRUE(std::isnan(p[0].rho));
}

TEST(PredictEigen, StrongSignalLimit) {
  const auto m = semicircle();
  const auto s = si::detect_support(m);
  double last_rho = 0.0, last_overlap = 0.0;
  for (double theta : {1.5, 2.0, 4.0, 8.0, 16.0, 64.0}) {
    const auto p = si::predict_eigen_outliers(m, s, eigen_model({theta}));
    ASSERT_EQ(p[0].regime, si::Regime::Outlier);
    EXPECT_GT(p[0].rho, last_rho);
    EXPECT_GT(*p[0].overlap_left, last_overlap);
    last_rho = p[0].rho;
    last_overlap = *p[0].overlap_left;
  }
  EXPECT_GT(last_overlap, 0.999);
}

TEST(PredictEigen, MiddleOutlierBelowPrincipalThreshold) {
  const auto m = two_bulk();
  const auto s = si::detect_support(m);
  ASSERT_EQ(s.size(), 2u);
  // Oracle thresholds from the closed-form transform.
  const double t1 = 1.0 / two_bulk_G(6.0), t2 = 1.0 / two_bulk_G(1.0);
  ASSERT_LT(t2, t1);
  const double theta = 0.5 * (t1 + t2);
  si::PredictOptions opt;
  opt.n = 1000;
  const auto p = si::predict_eigen_outliers(m, s, eigen_model({theta}), opt);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].j, 1u);
  EXPECT_EQ(p[0].regime, si::Regime::StuckAtLowerEdge);
  EXPECT_NEAR(p[0].threshold_lower, t1, 1e-3 * t1);
  EXPECT_EQ(p[1].j, 2u);
  EXPECT_EQ(p[1].regime, si::Regime::Outlier);
  EXPECT_EQ(p[1].bulk_position, 101u);
  EXPECT_NEAR(p[1].threshold_lower, t2, 1e-3 * t2);
  // G is negative just below a_1, so the middle gap has no upper threshold.
  EXPECT_LT(two_bulk_G(5.0 - 1e-9), 0.0);
  EXPECT_TRUE(std::isinf(p[1].threshold_upper));
  const double rho = oracle::bisect([&](double z) { return two_bulk_G(z) - 1.0 / theta; }, 1.0 + 1e-12, 5.0 - 1e-12);
  EXPECT_NEAR(p[1].rho, rho, 1e-5);
  const double h = 1e-6;
  const double gp = (two_bulk_G(rho + h) - two_bulk_G(rho - h)) / (2 * h);
  EXPECT_NEAR(*p[1].overlap_left, -1.0 / (theta * theta * gp), 1e-4);
}

TEST(PredictEigen, RejectsWrongGeometryAndOrder) {
  const auto m = semicircle();
  const auto s = si::detect_support(m);
  EXPECT_THROW(si::predict_eigen_outliers(m, s, sv_model({2.0})), si::InputError);
  EXPECT_THROW(si::predict_eigen_outliers(m, s, eigen_model({1.0, 2.0})), si::InputError);
  EXPECT_THROW(si::predict_eigen_outliers(m, s, eigen_model({-1.0})), si::InputError);
}

TEST(PredictSv, QuarterCircleOutlier) {
  const auto m = si::SpectralMeasure::density({si::tabulate_piece(0.0, 2.0, oracle::quarter_circle_density)});
  const auto ref = oracle::quarter_circle_spike(2.0);
  ASSERT_NEAR(ref.rho, 2.5, 1e-6);
  ASSERT_NEAR(ref.overlap, 0.75, 1e-5);
  const auto p = si::predict_sv_outliers(m, si::detect_support(m), si::AspectRatio(1.0), sv_model({2.0}));
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].regime, si::Regime::Outlier);
  EXPECT_NEAR(p[0].rho, ref.rho, 1e-4);
  EXPECT_NEAR(*p[0].overlap_left, ref.overlap, 1e-4);
  EXPECT_NEAR(*p[0].overlap_right, ref.overlap, 1e-4);
  EXPECT_NEAR(p[0].threshold_lower, 1.0, 1e-3);
}

TEST(PredictSv, IidEmpiricalSpectrumMatchesFigureOne) {
  si::NoiseSpec ns;
  ns.n = ns.m = 1000;
  ns.seed = 21;
  const si::Vector v = si::gram_svd(si::sample_noise(ns)).values;
  const auto m = si::empirical_measure(std::vector<double>(v.data(), v.data() + v.size()));
  const auto p = si::predict_sv_outliers(m, si::detect_support(m), si::AspectRatio(1.0), sv_model({2.0}));
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].regime, si::Regime::Outlier);
  EXPECT_NEAR(p[0].rho, 2.5, 0.02 * 2.5);
  EXPECT_EQ(p[0].bulk_position, 1u);
}

TEST(PredictSv, MixtureNoiseHasMiddleOutlierOnly) {
  si::NoiseSpec ns;
  ns.kind = si::NoiseKind::CovarianceMixture;
  ns.n = ns.m = 1000;
  ns.sigma_spectrum = {{20.0, 0.1}, {1.0, 0.9}};
  ns.seed = 4;
  const si::Vector v = si::gram_svd(si::sample_noise(ns)).values;
  const auto m = si::empirical_measure(std::vector<double>(v.data(), v.data() + v.size()));
  const auto s = si::detect_support(m);
  ASSERT_EQ(s.size(), 2u);
  const auto p = si::predict_sv_outliers(m, s, si::AspectRatio(1.0), sv_model({2.0}));
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].regime, si::Regime::StuckAtLowerEdge);
  EXPECT_EQ(p[1].regime, si::Regime::Outlier);
  EXPECT_EQ(p[1].bulk_position, 101u);
  EXPECT_GT(*p[1].overlap_left, 0.3);
  EXPECT_TRUE(p[1].finite_n_edges);
}

TEST(PredictJson, NonFiniteValuesAreNull) {
  si::OutlierPrediction p;
  p.i = 1;
  p.j = 1;
  const auto j = si::to_json(p);
  EXPECT_TRUE(j["rho"].is_null());
  EXPECT_TRUE(j["thresholds"]["upper"].is_null());
  EXPECT_TRUE(j["overlap_left"].is_null());
  EXPECT_EQ(j["regime"], "stuck_at_lower_edge");
}

TEST(FiniteN, MasterEquationRandomSymmetric) {
  const std::size_t n = 50;
  const si::Matrix x = wigner(n, 8);
  si::GaussianStream g(99);
  const si::Vector u = unit_vector(g, n);
  const double theta = 3.0;
  const auto xs = si::symmetric_eigen(x, true);
  const si::Matrix xt = x + theta * u * u.transpose();
  const auto xts = si::symmetric_eigen(xt, true);
  const auto master = si::finite_n_master_check(xts.values, xs, u, theta);
  EXPECT_EQ(master.entries.size() + master.skipped.size(), n);
  EXPECT_LE(master.max_residual, 1e-8);
  const auto overlap = si::finite_n_overlap_check(xts, xs, u, theta);
  EXPECT_LE(overlap.max_residual, 1e-8);
  EXPECT_TRUE(si::interlacing_check(xs.values, xts.values).holds);
}

TEST(FiniteN, HandBuiltDiagonal) {
  si::Vector lam(5);
  lam << 2.0, 1.0, 0.0, -1.0, -2.0;
  si::Vector u(5);
  u << 0.3, -0.5, 0.4, 0.6, 0.2;
  u /= u.norm();
  const si::SymmetricEigensystem x{lam, si::Matrix::Identity(5, 5)};
  const double theta = 1.0;
  const si::Matrix xt = si::Matrix(lam.asDiagonal()) + theta * u * u.transpose();
  const auto xts = si::symmetric_eigen(xt, true);
  const auto r = si::finite_n_master_check(xts.values, x, u, theta);
  EXPECT_EQ(r.entries.size(), 5u);
  EXPECT_LE(r.max_residual, 1e-12);
  // One eigenvalue per interval between poles, and one above the top pole.
  EXPECT_GT(xts.values(0), 2.0);
  for (int i = 1; i < 5; ++i) {
    EXPECT_GT(xts.values(i), lam(i));
    EXPECT_LT(xts.values(i), lam(i - 1));
  }
}

TEST(FiniteN, UnperturbedMatrixHasOnlyCoincidentValues) {
  const si::Matrix x = wigner(20, 3);
  const auto xs = si::symmetric_eigen(x, true);
  si::GaussianStream g(1);
  const si::Vector u = unit_vector(g, 20);
  const auto r = si::finite_n_master_check(xs.values, xs, u, 1.0);
  EXPECT_TRUE(r.entries.empty());
  EXPECT_EQ(r.skipped.size(), 20u);
  EXPECT_EQ(r.max_residual, 0.0);
}

TEST(FiniteN, DominantSpikeOverlap) {
  const std::size_t n = 50;
  const si::Matrix x = wigner(n, 12);
  si::GaussianStream g(5);
  const si::Vector u = unit_vector(g, n);
  const double theta = 100.0;
  const auto xs = si::symmetric_eigen(x, true);
  const auto xts = si::symmetric_eigen(x + theta * u * u.transpose(), true);
  const auto r = si::finite_n_overlap_check(xts, xs, u, theta);
  EXPECT_LE(r.max_residual, 1e-8);
  ASSERT_FALSE(r.entries.empty());
  EXPECT_EQ(r.entries.front().index, 1u);
  EXPECT_NEAR(r.entries.front().lhs, 1.0, 1e-3);
}

TEST(FiniteN, InterlacingDetectsViolation) {
  si::Vector a(3), b(3);
  a << 3.0, 2.0, 1.0;
  b << 3.5, 2.5, 0.5;
  EXPECT_FALSE(si::interlacing_check(a, b).holds);
  b << 3.5, 2.5, 1.5;
  EXPECT_TRUE(si::interlacing_check(a, b).holds);
}

TEST(SignalModel, Validation) {
  si::SignalModel s = sv_model({2.0, 1.0});
  s.validate();
  s.u = si::Matrix::Ones(4, 2);
  EXPECT_THROW(s.validate(), si::InputError);
  s.u = si::Matrix::Identity(4, 2);
  s.v = si::Matrix::Identity(5, 2);
  s.validate();
  const si::Matrix mat = s.matrix();
  EXPECT_DOUBLE_EQ(mat(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(mat(1, 1), 1.0);
  EXPECT_THROW(sv_model({}).validate(), si::InputError);
  EXPECT_THROW(sv_model({kInf}).validate(), si::InputError);
}

TEST(FiniteN, ExtendedPrecisionIdentities) {
  si::NoiseSpec ns;
  ns.kind = si::NoiseKind::SymmetricWigner;
  ns.n = ns.m = 120;
  ns.seed = 31;
  const si::Matrix x = si::sample_noise(ns);
  si::GaussianStream g(32);
  si::Vector u = g.matrix(120, 1).col(0);
  const auto ids = si::finite_n_identities(x, u, 2.0);
  EXPECT_EQ(ids.master.entries.size() + ids.master.skipped.size(), 120u);
  EXPECT_LE(ids.master.max_residual, 1e-8);
  EXPECT_LE(ids.overlap.max_residual, 1e-8);
  EXPECT_TRUE(ids.interlacing.holds);
  // Agrees with the double-precision eigenvalues to solver accuracy.
  EXPECT_LE((ids.xtil_values - si::symmetric_eigen(x + 2.0 * u.normalized() * u.normalized().transpose(), false).values)
                .cwiseAbs()
                .maxCoeff(),
            1e-12);
  EXPECT_THROW(si::finite_n_identities(x, u, 0.0), si::InputError);
}
