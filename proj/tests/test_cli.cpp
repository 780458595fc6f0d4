#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "spectral_inform/spectral_inform.hpp"

namespace si = spectral_inform;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

std::string binary_of(const si::Matrix& x) {
  std::ostringstream os;
  si::write_matrix_binary(os, x);
  return os.str();
}

std::string error_of(const std::string& bytes) {
  try {
    si::parse_matrix(bytes);
  } catch (const si::InputError& e) {
    return e.what();
  }
  return "";
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("spectral_inform_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args, const std::string& stdout_file = "stdout.txt") {
    const std::string cmd = std::string("\"") + SPECTRAL_INFORM_CLI + "\" " + args + " > \"" +
                            (dir_ / stdout_file).string() + "\" 2> \"" + (dir_ / "stderr.txt").string() + "\"";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST(MatrixIo, BinaryRoundTripIsBitExact) {
  si::Matrix x(2, 3);
  x << 1.0, -0.0, std::numeric_limits<double>::denorm_min(), 1e308, -3.14159, std::numeric_limits<double>::infinity();
  const std::string bytes = binary_of(x);
  EXPECT_EQ(bytes.substr(0, 10), "SPNM1\n2 3\n");
  EXPECT_EQ(bytes.size(), 10u + 6 * 8);
  const si::Matrix y = si::parse_matrix(bytes);
  ASSERT_EQ(y.rows(), 2);
  ASSERT_EQ(y.cols(), 3);
  EXPECT_EQ(0, std::memcmp(x.data(), y.data(), 6 * sizeof(double)));
  // little-endian payload: 1.0 is 00 .. f0 3f
  EXPECT_EQ(static_cast<unsigned char>(bytes[10 + 7]), 0x3f);
}

TEST(MatrixIo, CsvRoundTripIsExact) {
  si::GaussianStream g(3);
  const si::Matrix x = g.matrix(4, 5);
  std::ostringstream os;
  si::write_matrix_csv(os, x);
  EXPECT_EQ(si::parse_matrix(os.str()), x);
  const si::Matrix z = si::parse_matrix("# comment\n1 2 3\n\n4,5,6\r\n");
  EXPECT_EQ(z.rows(), 2);
  EXPECT_EQ(z(1, 2), 6.0);
}

TEST(MatrixIo, Diagnostics) {
  si::Matrix x = si::Matrix::Ones(2, 2);
  const std::string ok = binary_of(x);
  EXPECT_NE(error_of(ok.substr(0, ok.size() - 3)).find("truncated"), std::string::npos);
  EXPECT_NE(error_of(ok + "x").find("trailing bytes"), std::string::npos);
  EXPECT_NE(error_of("SPNM1\n2 a\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("SPNM1\n0 2\n").find("positive"), std::string::npos);
  EXPECT_NE(error_of("SPNM1 2 2").find("byte offset 5"), std::string::npos);
  EXPECT_NE(error_of("1,2\n3,x\n").find("line 2, column 3"), std::string::npos);
  EXPECT_NE(error_of("1,2\n3\n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("1,2,\n").find("trailing comma"), std::string::npos);
  EXPECT_NE(error_of("").find("no data"), std::string::npos);
  EXPECT_THROW(si::read_matrix("/nonexistent/file"), si::InputError);
}

TEST(Svg, DeterministicAndEscaped) {
  si::svg::Plot p;
  p.title = "a < b & c";
  p.series.push_back({"s", {0, 1, 2}, {1, std::nan(""), 3}, si::svg::Style::Line, "#000"});
  p.series.push_back({"", {0, 1}, {0.5, 0.2}, si::svg::Style::Stems, "#f00"});
  p.rules.push_back({0.7, true, "#888", "level"});
  const std::string a = si::svg::render(p), b = si::svg::render(p);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("a &lt; b &amp; c"), std::string::npos);
  EXPECT_EQ(a.rfind("</svg>\n"), a.size() - 7);
  // The NaN breaks the line into two pieces.
  EXPECT_NE(a.find(" M"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitNonZero) {
  EXPECT_NE(run(""), 0);
  EXPECT_NE(run("detect"), 0);
  EXPECT_NE(run("simulate --sigma-spec 20 --out " + path("x.bin")), 0);
  EXPECT_NE(slurp(path("stderr.txt")).find("value:fraction"), std::string::npos);
  EXPECT_NE(run("reproduce-figure fig9 --out " + path("f")), 0);
}

TEST_F(Cli, CorruptFileGivesDiagnostic) {
  spit(path("bad.bin"), std::string("SPNM1\n3 3\n") + std::string(20, '\0'));
  EXPECT_EQ(run("detect " + path("bad.bin")), 1);
  EXPECT_NE(slurp(path("stderr.txt")).find("truncated"), std::string::npos);
  spit(path("bad.csv"), "1,2\n3,zz\n");
  EXPECT_EQ(run("detect " + path("bad.csv")), 1);
  EXPECT_NE(slurp(path("stderr.txt")).find("line 2, column 3"), std::string::npos);
}

TEST_F(Cli, ZeroMatrixWithIidNullHasRankZero) {
  si::write_matrix(path("zero.bin"), si::Matrix::Zero(60, 60));
  ASSERT_EQ(run("detect " + path("zero.bin") + " --null-draws 100"), 0);
  const auto j = nlohmann::json::parse(slurp(path("stdout.txt")));
  EXPECT_EQ(j["estimated_rank"], 0);
}

TEST_F(Cli, SimulatedMixtureHasMiddleDetection) {
  ASSERT_EQ(run("simulate --n 300 --sigma-spec 20:0.1 --sigma-spec 1:0.9 --theta 2 --seed 3 --out " +
                path("x.bin") + " --truth " + path("truth.json")),
            0);
  const si::Matrix x = si::read_matrix(path("x.bin"));
  EXPECT_EQ(x.rows(), 300);
  const auto truth = nlohmann::json::parse(slurp(path("truth.json")));
  EXPECT_EQ(truth["u"][0].size(), 300u);
  ASSERT_EQ(run("detect " + path("x.bin") + " --sigma-spec 20:0.1 --sigma-spec 1:0.9 --null-draws 100"), 0);
  const auto j = nlohmann::json::parse(slurp(path("stdout.txt")));
  EXPECT_EQ(j["estimated_rank"], 1);
  EXPECT_EQ(j["informative_indices"][0], 31);
  EXPECT_EQ(j["prefix_rule_rank"], 0);
  ASSERT_EQ(run("estimate " + path("x.bin") + " --sigma-spec 20:0.1 --sigma-spec 1:0.9 --null-draws 100 --out " +
                path("s.bin") + " --report " + path("rep.json")),
            0);
  const si::Matrix s = si::read_matrix(path("s.bin"));
  EXPECT_EQ(s.rows(), 300);
  Eigen::JacobiSVD<si::Matrix> svd(s);
  EXPECT_GT(svd.singularValues()(0), 1.0);
  EXPECT_LT(svd.singularValues()(1), 1e-8);
}

TEST_F(Cli, PredictJsonAndCsv) {
  ASSERT_EQ(run("predict --n 300 --sigma-spec 20:0.1 --sigma-spec 1:0.9 --theta 2"), 0);
  const auto j = nlohmann::json::parse(slurp(path("stdout.txt")));
  ASSERT_EQ(j["predictions"].size(), 2u);
  EXPECT_EQ(j["predictions"][1]["regime"], "outlier");
  EXPECT_EQ(j["predictions"][0]["regime"], "stuck_at_lower_edge");
  ASSERT_EQ(run("predict --n 300 --noise wigner --theta 2 --format csv"), 0);
  EXPECT_NE(slurp(path("stdout.txt")).find("1,1,2.0,outlier"), std::string::npos);
}

TEST_F(Cli, FigureSixFiles) {
  ASSERT_EQ(run("reproduce-figure fig6 --out " + path("f6")), 0);
  const auto rep = nlohmann::json::parse(slurp(path("f6/fig6_report.json")));
  EXPECT_LE(rep["master_max_residual"].get<double>(), 1e-10);
  EXPECT_TRUE(fs::exists(path("f6/fig6_intersections.csv")));
  EXPECT_NE(slurp(path("f6/fig6.svg")).find("<svg"), std::string::npos);
  ASSERT_EQ(run("reproduce-figure fig6 --theta inf --out " + path("pole")), 0);
  EXPECT_FALSE(fs::exists(path("pole/fig6_intersections.csv")));
  EXPECT_FALSE(nlohmann::json::parse(slurp(path("pole/fig6_report.json"))).contains("eigenvalues_xtilde"));
}

TEST_F(Cli, FigureOneAndTwoShapes) {
  ASSERT_EQ(run("reproduce-figure fig1 --n 400 --null-draws 100 --out " + path("f")), 0);
  auto t = nlohmann::json::parse(slurp(path("f/fig1_trial.json")));
  auto v = t["values"];
  // Exactly one value separated above the bulk.
  const double edge = t["noise_support"]["edges"][0].get<double>();
  EXPECT_GT(v[0].get<double>(), edge + 0.2);
  EXPECT_LT(v[1].get<double>(), edge + 0.05);
  ASSERT_EQ(run("reproduce-figure fig2 --n 400 --null-draws 100 --out " + path("f")), 0);
  t = nlohmann::json::parse(slurp(path("f/fig2_trial.json")));
  v = t["values"];
  const auto edges = t["noise_support"]["edges"];
  ASSERT_EQ(edges.size(), 4u);
  // Top value inside the upper bulk, an isolated value in the inter-bulk gap.
  EXPECT_LT(v[0].get<double>(), edges[0].get<double>() + 0.3);
  EXPECT_GT(v[40].get<double>(), edges[2].get<double>() + 0.1);
  EXPECT_LT(v[40].get<double>(), edges[1].get<double>());
  EXPECT_EQ(t["detection"]["informative_indices"][0], 41);
  for (const char* f : {"fig2_spectrum.csv", "fig2_spectrum.svg", "fig2_informativeness.svg"})
    EXPECT_TRUE(fs::exists(path(std::string("f/") + f))) << f;
}

TEST_F(Cli, SweepFormats) {
  const std::string base = "sweep --n 60 --trials 3 --theta 1 --theta 3 --sigma-spec 20:0.1 --sigma-spec 1:0.9";
  ASSERT_EQ(run(base + " --format csv"), 0);
  EXPECT_EQ(slurp(path("stdout.txt")).rfind("grid_index,theta", 0), 0u);
  ASSERT_EQ(run(base + " --format svg --out " + path("s.svg")), 0);
  EXPECT_NE(slurp(path("s.svg")).find("<svg"), std::string::npos);
  ASSERT_EQ(run(base), 0);
  std::istringstream lines(slurp(path("stdout.txt")));
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    EXPECT_TRUE(nlohmann::json::parse(line).contains("informativeness"));
    ++count;
  }
  EXPECT_EQ(count, 6);
}

TEST_F(Cli, SweepFromSpecFile) {
  spit(path("spec.json"), R"({"noise": {"kind": "iid", "n": 40}, "signals": [0.5, 3.0], "trials": 2, "seed": 4})");
  ASSERT_EQ(run("sweep --spec " + path("spec.json") + " --format csv"), 0);
  const std::string csv = slurp(path("stdout.txt"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  spit(path("bad.json"), R"({"noise": {"n": 40}})");
  EXPECT_EQ(run("sweep --spec " + path("bad.json")), 1);
  EXPECT_NE(slurp(path("stderr.txt")).find("experiment json"), std::string::npos);
}
