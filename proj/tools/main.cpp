// spectral-inform: simulate, detect, estimate, predict, sweep, reproduce-figure.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spectral_inform/spectral_inform.hpp"

namespace si = spectral_inform;
using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 1;
  double alpha = 0.01;
  double kappa = 25.0;
  std::size_t trials = 0;  // 0: command default
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> thetas;
  std::vector<std::string> sigma_spec;
  std::string noise;
  std::string format;
  std::string out;
  std::size_t null_draws = 200;
};

void add_common(CLI::App* app, Common& c, bool with_null) {
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--alpha", c.alpha, "False-alarm level per bulk edge")->check(CLI::Range(1e-6, 0.5));
  app->add_option("--kappa", c.kappa, "Support split multiple of the mean spacing")->check(CLI::PositiveNumber);
  app->add_option("--trials", c.trials, "Monte Carlo trials");
  app->add_option("--n", c.n, "Rows");
  app->add_option("--m", c.m, "Columns");
  app->add_option("--theta", c.thetas, "Signal strength (repeatable)")->take_all();
  app->add_option("--sigma-spec", c.sigma_spec, "Covariance spectrum entry value:fraction (repeatable)")->take_all();
  app->add_option("--noise", c.noise, "Noise ensemble")->check(CLI::IsMember({"iid", "mixture", "wigner"}));
  app->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "csv", "svg"}));
  app->add_option("--out", c.out, "Output path (file or directory)");
  if (with_null) app->add_option("--null-draws", c.null_draws, "Noise-only calibration draws");
}

std::pair<double, double> parse_sigma_entry(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw si::InputError("--sigma-spec expects value:fraction, got '" + s + "'");
  try {
    std::size_t p1 = 0, p2 = 0;
    const std::string a = s.substr(0, colon), b = s.substr(colon + 1);
    const double v = std::stod(a, &p1), f = std::stod(b, &p2);
    if (p1 != a.size() || p2 != b.size()) throw std::invalid_argument("trailing");
    return {v, f};
  } catch (const std::exception&) {
    throw si::InputError("--sigma-spec expects value:fraction, got '" + s + "'");
  }
}

si::NoiseSpec noise_spec(const Common& c, std::size_t default_n) {
  si::NoiseSpec ns;
  std::string kind = c.noise;
  if (kind.empty()) kind = c.sigma_spec.empty() ? "iid" : "mixture";
  ns.kind = si::noise_kind_from_string(kind);
  ns.n = c.n ? c.n : default_n;
  ns.m = c.m ? c.m : ns.n;
  for (const auto& e : c.sigma_spec) ns.sigma_spectrum.push_back(parse_sigma_entry(e));
  if (ns.kind == si::NoiseKind::CovarianceMixture && ns.sigma_spectrum.empty())
    throw si::InputError("mixture noise needs at least one --sigma-spec");
  if (ns.kind != si::NoiseKind::CovarianceMixture && !ns.sigma_spectrum.empty())
    throw si::InputError("--sigma-spec only applies to mixture noise");
  ns.validate();
  return ns;
}

si::NoiseSpec paper_mixture(std::size_t n) {
  si::NoiseSpec ns;
  ns.kind = si::NoiseKind::CovarianceMixture;
  ns.n = ns.m = n;
  ns.sigma_spectrum = {{20.0, 0.1}, {1.0, 0.9}};
  return ns;
}

std::vector<double> sorted_thetas(std::vector<double> t) {
  std::sort(t.begin(), t.end(), std::greater<>());
  return t;
}

// Output sink: a file when --out is set, stdout otherwise.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw si::InputError("cannot write '" + path + "'");
    }
  }
  std::ostream& os() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
  void finish() {
    os().flush();
    if (!os()) throw si::InputError("write failed");
  }

 private:
  std::ofstream file_;
};

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw si::InputError("cannot write '" + p.string() + "'");
  f << text;
  if (!f) throw si::InputError("write failed for '" + p.string() + "'");
}

std::string csv_num(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return json(x).dump();
}

si::DetectionConfig detection_config(const Common& c) {
  si::DetectionConfig dc;
  dc.alpha = c.alpha;
  dc.support.kappa = c.kappa;
  return dc;
}

si::NullModel mc_null(const si::NoiseSpec& ns, const Common& c) {
  return si::NullModel::monte_carlo(
      [ns](std::uint64_t seed) {
        si::NoiseSpec s = ns;
        s.seed = seed;
        return si::sample_noise(s);
      },
      c.null_draws, si::derive_seed(c.seed, 0, si::kSeedNull),
      std::string("monte carlo ") + si::to_string(ns.kind) + " noise");
}

// Null model for an observed matrix: a known spectrum file, or Monte Carlo
// draws of the configured ensemble at the data's shape.
si::NullModel null_for(const si::Matrix& data, const Common& c, const std::string& spectrum_file) {
  if (!spectrum_file.empty()) {
    std::ifstream f(spectrum_file);
    if (!f) throw si::InputError("cannot open '" + spectrum_file + "'");
    json j;
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw si::InputError("null spectrum '" + spectrum_file + "': " + e.what());
    }
    return si::NullModel::known(si::measure_from_json(j), "known spectrum from " + spectrum_file);
  }
  Common cc = c;
  cc.n = static_cast<std::size_t>(std::min(data.rows(), data.cols()));
  cc.m = static_cast<std::size_t>(std::max(data.rows(), data.cols()));
  return mc_null(noise_spec(cc, cc.n), c);
}

si::Matrix oriented(const si::Matrix& x) { return x.rows() <= x.cols() ? x : si::Matrix(x.transpose()); }

std::vector<double> to_std(const si::Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& c, const std::string& truth_path) {
  si::NoiseSpec ns = noise_spec(c, 1000);
  ns.seed = si::derive_seed(c.seed, 0, si::kSeedNoise);
  const si::Matrix x = si::sample_noise(ns);
  si::SignalModel sig;
  sig.geometry = ns.kind == si::NoiseKind::SymmetricWigner ? si::Geometry::SymmetricEigen : si::Geometry::RectangularSVD;
  sig.thetas = c.thetas.empty() ? std::vector<double>{0.0} : sorted_thetas(c.thetas);
  const si::Matrix data = si::plant_signal(x, sig, si::derive_seed(c.seed, 0, si::kSeedSignal));
  if (c.out.empty() && c.format != "csv" && c.format != "json")
    throw si::InputError("simulate writes a binary matrix; give --out or --format csv");
  if (c.format == "json") {
    Sink s(c.out);
    json j = {{"noise", si::to_json(ns)}, {"thetas", sig.thetas}, {"seed", c.seed}, {"rng", si::kGaussianStreamName}};
    json rows = json::array();
    for (Eigen::Index i = 0; i < data.rows(); ++i) rows.push_back(to_std(data.row(i).transpose()));
    j["matrix"] = rows;
    s.os() << j.dump() << '\n';
    s.finish();
  } else {
    Sink s(c.out);
    if (c.format == "csv")
      si::write_matrix_csv(s.os(), data);
    else
      si::write_matrix_binary(s.os(), data);
    s.finish();
  }
  if (!truth_path.empty()) {
    json t = {{"thetas", sig.thetas}, {"seed", c.seed}, {"rng", si::kGaussianStreamName}};
    json u = json::array(), v = json::array();
    for (Eigen::Index k = 0; k < sig.u.cols(); ++k) u.push_back(to_std(sig.u.col(k)));
    for (Eigen::Index k = 0; k < sig.v.cols(); ++k) v.push_back(to_std(sig.v.col(k)));
    t["u"] = u;
    t["v"] = v;
    write_text(truth_path, t.dump() + "\n");
  }
  return 0;
}

void write_report(const si::DetectionReport& rep, const Common& c, std::ostream& os) {
  if (c.format == "csv") {
    os << "index,bulk,value,gap_size,threshold,pvalue,status\n";
    for (const auto& g : rep.gaps)
      os << g.index << ',' << g.bulk << ',' << csv_num(g.value) << ',' << csv_num(g.gap_size) << ','
         << csv_num(g.threshold) << ',' << (g.pvalue ? csv_num(*g.pvalue) : "") << ',' << si::to_string(g.status)
         << '\n';
  } else {
    os << si::to_json(rep).dump(2) << '\n';
  }
}

int cmd_detect(const Common& c, const std::string& input, const std::string& spectrum_file) {
  if (c.format == "svg") throw si::InputError("detect supports json or csv output");
  const si::Matrix data = oriented(si::read_matrix(input));
  if (std::min(data.rows(), data.cols()) < 10) throw si::InputError("detect: need at least 10 singular values");
  si::DetectionConfig dc = detection_config(c);
  const si::DetectionReport rep = si::detect_components(data, null_for(data, c, spectrum_file), dc);
  Sink s(c.out);
  write_report(rep, c, s.os());
  s.finish();
  return 0;
}

int cmd_estimate(const Common& c, const std::string& input, const std::string& spectrum_file,
                 const std::string& report_path) {
  if (c.format == "svg") throw si::InputError("estimate supports json or csv output");
  const si::Matrix raw = si::read_matrix(input);
  const bool transposed = raw.rows() > raw.cols();
  const si::Matrix data = oriented(raw);
  si::DetectionConfig dc = detection_config(c);
  const si::DetectionReport rep = si::detect_components(data, null_for(data, c, spectrum_file), dc);
  const si::SignalEstimate est = si::estimate_signal(data, rep);
  const si::Matrix recon = transposed ? si::Matrix(est.reconstruction.transpose()) : est.reconstruction;
  json comps = json::array();
  for (const auto& k : est.components) comps.push_back({{"index", k.index}, {"sigma", k.sigma}});
  json summary = {{"rank", est.rank}, {"components", comps}, {"detection", si::to_json(rep)}};
  if (!report_path.empty()) write_text(report_path, summary.dump(2) + "\n");
  if (c.out.empty()) {
    std::cout << summary.dump(2) << '\n';
  } else {
    si::write_matrix(c.out, recon, c.format == "csv");
  }
  return 0;
}

int cmd_predict(const Common& c, const std::string& spectrum_file, double aspect) {
  std::optional<si::SpectralMeasure> m;
  si::Geometry geom = si::Geometry::RectangularSVD;
  si::AspectRatio ratio(1.0);
  json source;
  if (!spectrum_file.empty()) {
    std::ifstream f(spectrum_file);
    if (!f) throw si::InputError("cannot open '" + spectrum_file + "'");
    json j;
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw si::InputError("spectrum '" + spectrum_file + "': " + e.what());
    }
    m = si::measure_from_json(j);
    if (c.noise == "wigner") geom = si::Geometry::SymmetricEigen;
    ratio = si::AspectRatio(aspect);
    source = {{"spectrum_file", spectrum_file}};
  } else {
    si::NoiseSpec ns = noise_spec(c, 1000);
    ns.seed = si::derive_seed(c.seed, 0, si::kSeedNoise);
    const si::Matrix x = si::sample_noise(ns);
    si::Vector vals;
    if (ns.kind == si::NoiseKind::SymmetricWigner) {
      geom = si::Geometry::SymmetricEigen;
      vals = si::symmetric_eigen(x, false).values;
    } else {
      vals = si::gram_svd(x).values;
      ratio = si::AspectRatio::of(ns.n, ns.m);
    }
    m = si::empirical_measure(to_std(vals));
    source = {{"noise", si::to_json(ns)}, {"seed", c.seed}};
  }
  si::SupportConfig sc = si::DetectionConfig{}.support;
  sc.kappa = c.kappa;
  const si::SupportProfile s = si::detect_support(*m, sc);
  si::SignalModel sig;
  sig.geometry = geom;
  sig.thetas = c.thetas.empty() ? std::vector<double>{1.0} : sorted_thetas(c.thetas);
  const auto preds = geom == si::Geometry::SymmetricEigen ? si::predict_eigen_outliers(*m, s, sig)
                                                          : si::predict_sv_outliers(*m, s, ratio, sig);
  Sink out(c.out);
  if (c.format == "csv") {
    out.os() << "i,j,theta,regime,rho,overlap_left,overlap_right,bulk_position,threshold_lower,threshold_upper\n";
    for (const auto& p : preds)
      out.os() << p.i << ',' << p.j << ',' << csv_num(sig.thetas[p.i - 1]) << ',' << si::to_string(p.regime) << ','
               << csv_num(p.rho) << ',' << (p.overlap_left ? csv_num(*p.overlap_left) : "") << ','
               << (p.overlap_right ? csv_num(*p.overlap_right) : "") << ',' << p.bulk_position << ','
               << csv_num(p.threshold_lower) << ',' << csv_num(p.threshold_upper) << '\n';
  } else if (c.format == "svg") {
    throw si::InputError("predict supports json or csv output");
  } else {
    json intervals = json::array();
    for (std::size_t j = 1; j <= s.size(); ++j)
      intervals.push_back({{"j", j}, {"a", s.lower(j)}, {"b", s.upper(j)}, {"weight", s.weight(j)}});
    json rows = json::array();
    for (const auto& p : preds) rows.push_back(si::to_json(p));
    out.os() << json({{"source", source}, {"support", intervals}, {"c", ratio.c}, {"thetas", sig.thetas},
                      {"predictions", rows}})
                    .dump(2)
             << '\n';
  }
  out.finish();
  return 0;
}

std::vector<double> default_grid() {
  std::vector<double> g;
  for (int k = 0; k <= 28; ++k) g.push_back(0.5 + 0.125 * k);
  return g;
}

si::ExperimentSpec sweep_spec(const Common& c, const si::NoiseSpec& ns, const std::vector<double>& grid,
                              std::size_t default_trials) {
  si::ExperimentSpec e;
  e.noise = ns;
  for (double t : grid) e.signals.push_back({t});
  e.trials = c.trials ? c.trials : default_trials;
  e.master_seed = c.seed;
  e.support.kappa = c.kappa;
  e.detection.alpha = c.alpha;
  e.detection.support.kappa = c.kappa;
  e.null_draws = c.null_draws;
  return e;
}

std::string sweep_svg(const si::ExperimentResult& r, const std::string& title) {
  si::svg::Plot p;
  p.title = title;
  p.xlabel = "theta";
  p.ylabel = "mean |<u~_i, u>|^2";
  p.ymin = 0.0;
  p.ymax = 1.0;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  const std::size_t ell = r.reference_counts.size();
  for (std::size_t j = 1; j <= ell; ++j) {
    si::svg::Series s;
    s.style = si::svg::Style::Line;
    s.color = colors[(j - 1) % 4];
    for (const auto& g : r.summary) {
      if (g.bulks.size() < j) continue;
      s.x.push_back(g.thetas.front());
      s.y.push_back(g.bulks[j - 1].mean_informativeness);
    }
    s.name = (j == 1 ? "principal (i=1)" : "component i=" + std::to_string(r.summary.front().bulks[j - 1].position));
    p.series.push_back(s);
    double th = 0.0;
    std::size_t cnt = 0;
    for (const auto& g : r.summary)
      if (g.bulks.size() >= j && std::isfinite(g.bulks[j - 1].mean_threshold)) {
        th += g.bulks[j - 1].mean_threshold;
        ++cnt;
      }
    if (cnt) p.rules.push_back({th / static_cast<double>(cnt), false, s.color, "predicted"});
  }
  return si::svg::render(p);
}

std::string values_svg(const si::ExperimentResult& r, const std::string& title) {
  si::svg::Plot p;
  p.title = title;
  p.xlabel = "theta";
  p.ylabel = "mean singular value";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  for (std::size_t j = 1; j <= r.reference_counts.size(); ++j) {
    for (std::size_t off = 0; off < 2; ++off) {
      si::svg::Series s;
      s.style = si::svg::Style::Line;
      s.color = colors[(j - 1) % 4];
      const std::size_t pos = r.summary.front().bulks[j - 1].position + off;
      for (const auto& g : r.summary) {
        if (pos > static_cast<std::size_t>(g.mean_values.size())) continue;
        s.x.push_back(g.thetas.front());
        s.y.push_back(g.mean_values(static_cast<Eigen::Index>(pos - 1)));
      }
      s.name = "i=" + std::to_string(pos);
      p.series.push_back(s);
    }
  }
  return si::svg::render(p);
}

int cmd_sweep(const Common& c, bool detect, const std::string& spec_file) {
  si::ExperimentSpec e;
  if (!spec_file.empty()) {
    // The JSON spec is complete on its own; command-line values do not override it.
    std::ifstream f(spec_file);
    if (!f) throw si::InputError("cannot open '" + spec_file + "'");
    json j;
    try {
      f >> j;
    } catch (const json::exception& ex) {
      throw si::InputError("experiment spec '" + spec_file + "': " + ex.what());
    }
    e = si::experiment_from_json(j);
  } else {
    si::NoiseSpec ns = noise_spec(c, 200);
    const std::vector<double> grid = c.thetas.empty() ? default_grid() : c.thetas;
    e = sweep_spec(c, ns, grid, 20);
    e.detect = detect;
  }
  const si::ExperimentResult r = si::run_experiment(e);
  Sink s(c.out);
  if (c.format == "csv")
    si::write_summary_csv(s.os(), r);
  else if (c.format == "svg")
    s.os() << sweep_svg(r, "informativeness sweep");
  else
    si::write_jsonl(s.os(), r, e.record_components);
  s.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// Figures

std::string csv_series(const std::string& header, const std::vector<std::vector<double>>& cols) {
  std::ostringstream os;
  os << header << '\n';
  const std::size_t rows = cols.empty() ? 0 : cols.front().size();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << csv_num(cols[k][i]);
    os << '\n';
  }
  return os.str();
}

// Single realization figure (spectrum + informativeness profile).
void figure_single(const std::filesystem::path& dir, const std::string& id, const si::NoiseSpec& base, double theta,
                   const Common& c) {
  si::ExperimentSpec e;
  e.noise = base;
  e.signals = {{theta}};
  e.trials = 1;
  e.master_seed = c.seed;
  e.detect = true;
  e.null_draws = c.null_draws;
  e.detection.alpha = c.alpha;
  e.detection.support.kappa = c.kappa;
  e.support.kappa = c.kappa;
  const si::ExperimentResult r = si::run_experiment(e);
  const si::TrialResult& t = r.trials.front();
  std::vector<double> idx;
  for (Eigen::Index i = 0; i < t.values.size(); ++i) idx.push_back(static_cast<double>(i + 1));
  write_text(dir / (id + "_spectrum.csv"),
             csv_series("index,singular_value,informativeness", {idx, to_std(t.values), to_std(t.informativeness)}));
  json meta = si::to_json(t, static_cast<std::size_t>(t.values.size()));
  meta["noise"] = si::to_json(base);
  write_text(dir / (id + "_trial.json"), meta.dump(2) + "\n");

  si::svg::Plot a;
  a.title = id + ": singular values, theta = " + csv_num(theta);
  a.xlabel = "index i";
  a.ylabel = "singular value";
  a.series.push_back({"", idx, to_std(t.values), si::svg::Style::Points, "#1f77b4"});
  for (std::size_t k = 0; k < t.noise_edges.size(); k += 2)
    a.rules.push_back({t.noise_edges[k], true, "#888888", "noise edge b_" + std::to_string(k / 2 + 1)});
  write_text(dir / (id + "_spectrum.svg"), si::svg::render(a));

  si::svg::Plot b;
  b.title = id + ": informativeness |<u~_i, u>|^2";
  b.xlabel = "index i";
  b.ylabel = "informativeness";
  b.ymin = 0.0;
  b.series.push_back({"", idx, to_std(t.informativeness), si::svg::Style::Stems, "#d62728"});
  write_text(dir / (id + "_informativeness.svg"), si::svg::render(b));
}

void figure6(const std::filesystem::path& dir, const Common& c) {
  const int n = 5;
  si::GaussianStream rng(si::derive_seed(c.seed, 0, si::kSeedNoise));
  si::Vector lam = rng.vector(n);
  std::sort(lam.data(), lam.data() + n, std::greater<>());
  si::Vector u = rng.vector(n);
  u /= u.norm();
  const double theta = c.thetas.empty() ? 1.0 : c.thetas.front();
  const bool with_line = std::isfinite(theta) && theta > 0.0;
  si::SymmetricEigensystem x{lam, si::Matrix::Identity(n, n)};
  const si::SpectralMeasure mu = si::empirical_measure(to_std(lam), to_std(u.array().square().matrix()));

  const double lo = lam.minCoeff() - 1.5, hi = lam.maxCoeff() + 1.5 + (with_line ? theta : 0.0);
  std::vector<double> zs, gs;
  const int samples = 2000;
  for (int k = 0; k <= samples; ++k) {
    const double z = lo + (hi - lo) * k / samples;
    double g = std::numeric_limits<double>::quiet_NaN();
    try {
      g = si::cauchy_G(mu, z);
    } catch (const si::DomainError&) {
    }
    zs.push_back(z);
    gs.push_back(std::isfinite(g) && std::abs(g) < 8.0 ? g : std::numeric_limits<double>::quiet_NaN());
  }
  write_text(dir / "fig6_curve.csv", csv_series("z,G", {zs, gs}));

  si::svg::Plot p;
  p.title = with_line ? "fig6: G(z) for n = 5 and the level 1/theta" : "fig6: G(z) for n = 5";
  p.xlabel = "z";
  p.ylabel = "G(z)";
  p.ymin = -6.0;
  p.ymax = 6.0;
  p.series.push_back({"G(z)", zs, gs, si::svg::Style::Line, "#1f77b4"});
  for (Eigen::Index i = 0; i < n; ++i) p.rules.push_back({lam(i), false, "#888888", ""});
  json report = {{"eigenvalues_x", to_std(lam)}, {"u", to_std(u)}};
  if (with_line) {
    const auto ids = si::finite_n_identities(si::Matrix(lam.asDiagonal()), u, theta);
    const si::ResidualReport& master = ids.master;
    const si::ResidualReport& overlap = ids.overlap;
    const si::SymmetricEigensystem es{ids.xtil_values, {}};
    p.rules.push_back({1.0 / theta, true, "#d62728", "1/theta"});
    p.series.push_back({"eigenvalues of X~", to_std(es.values), std::vector<double>(n, 1.0 / theta),
                        si::svg::Style::Points, "#d62728"});
    report["theta"] = theta;
    report["eigenvalues_xtilde"] = to_std(es.values);
    report["master_max_residual"] = master.max_residual;
    report["overlap_max_residual"] = overlap.max_residual;
    json ov = json::array();
    for (const auto& e : overlap.entries) ov.push_back({{"index", e.index}, {"z", e.z}, {"overlap", e.lhs}, {"identity", e.rhs}});
    report["overlaps"] = ov;
    write_text(dir / "fig6_intersections.csv", csv_series("eigenvalue,level", {to_std(es.values), std::vector<double>(n, 1.0 / theta)}));
  }
  write_text(dir / "fig6_report.json", report.dump(2) + "\n");
  write_text(dir / "fig6.svg", si::svg::render(p));
}

void figure7(const std::filesystem::path& dir, const Common& c) {
  const si::NoiseSpec ns = paper_mixture(c.n ? c.n : 1000);
  const std::vector<double> grid = c.thetas.empty() ? default_grid() : c.thetas;
  si::ExperimentSpec e = sweep_spec(c, ns, grid, 250);
  const si::ExperimentResult r = si::run_experiment(e);
  std::ostringstream csv;
  si::write_summary_csv(csv, r);
  write_text(dir / "fig7_summary.csv", csv.str());
  write_text(dir / "fig7_informativeness.svg", sweep_svg(r, "fig7: informativeness of principal and middle components"));
  write_text(dir / "fig7_values.svg", values_svg(r, "fig7: ordered singular values"));
}

int cmd_reproduce(const Common& c, const std::string& id) {
  if (c.out.empty()) throw si::InputError("reproduce-figure needs --out <directory>");
  const std::filesystem::path dir(c.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw si::InputError("cannot create output directory '" + c.out + "'");
  const double theta = c.thetas.empty() ? 2.0 : c.thetas.front();
  if (id == "fig1") {
    si::NoiseSpec ns;
    ns.kind = si::NoiseKind::IidGaussian;
    ns.n = c.n ? c.n : 1000;
    ns.m = c.m ? c.m : ns.n;
    figure_single(dir, "fig1", ns, theta, c);
  } else if (id == "fig2") {
    si::NoiseSpec ns = paper_mixture(c.n ? c.n : 1000);
    if (c.m) ns.m = c.m;
    figure_single(dir, "fig2", ns, theta, c);
  } else if (id == "fig6") {
    figure6(dir, c);
  } else if (id == "fig7") {
    figure7(dir, c);
  } else {
    throw si::InputError("unknown figure '" + id + "' (fig1, fig2, fig6, fig7)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detection and estimation of low-rank signals from principal and middle spectral components"};
  app.require_subcommand(1);
  Common c;
  std::string truth, input, spectrum, report, figure, spec_file;
  double aspect = 1.0;

  auto* sim = app.add_subcommand("simulate", "Sample a signal-plus-noise matrix");
  add_common(sim, c, false);
  sim->add_option("--truth", truth, "Write the planted vectors as JSON");

  auto* det = app.add_subcommand("detect", "Detect informative components of a matrix");
  add_common(det, c, true);
  det->add_option("input", input, "Matrix file (SPNM1 binary or CSV)")->required();
  det->add_option("--null-spectrum", spectrum, "Known noise singular value spectrum (JSON measure)");

  auto* est = app.add_subcommand("estimate", "Reconstruct the signal from the informative components");
  add_common(est, c, true);
  est->add_option("input", input, "Matrix file (SPNM1 binary or CSV)")->required();
  est->add_option("--null-spectrum", spectrum, "Known noise singular value spectrum (JSON measure)");
  est->add_option("--report", report, "Write the estimate summary as JSON");

  auto* pre = app.add_subcommand("predict", "Predict regimes, outlier locations and overlaps");
  add_common(pre, c, false);
  pre->add_option("--spectrum", spectrum, "Noise spectral measure (JSON); sampled when absent");
  pre->add_option("--aspect", aspect, "Aspect ratio c = n/m for --spectrum")->check(CLI::Range(1e-9, 1.0));

  bool sweep_detect = false;
  auto* swp = app.add_subcommand("sweep", "Monte Carlo sweep over signal strengths");
  add_common(swp, c, true);
  swp->add_flag("--detect", sweep_detect, "Run the detector on every trial");
  swp->add_option("--spec", spec_file, "ExperimentSpec JSON file (replaces the grid and noise flags)");

  auto* fig = app.add_subcommand("reproduce-figure", "Write data and SVG for a figure recipe");
  add_common(fig, c, true);
  fig->add_option("id", figure, "fig1 | fig2 | fig6 | fig7")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*sim) return cmd_simulate(c, truth);
    if (*det) return cmd_detect(c, input, spectrum);
    if (*est) return cmd_estimate(c, input, spectrum, report);
    if (*pre) return cmd_predict(c, spectrum, aspect);
    if (*swp) return cmd_sweep(c, sweep_detect, spec_file);
    if (*fig) return cmd_reproduce(c, figure);
  } catch (const si::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
