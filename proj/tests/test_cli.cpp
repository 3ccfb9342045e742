#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli_app.hpp"

namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "camt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = camt::cli::run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("camt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run({"--version"}).code, 0);
  const auto unknown = run({"fit", "--bogus"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"fit", "--input", path("missing.tsv"), "--output", path("f.json")}).code, 2);
  EXPECT_EQ(run({"simulate", "--m", "10", "--output", path("no/such/dir/s.tsv")}).code, 1);
  std::ofstream(path("bad.tsv")) << "id\tpvalue\na\t2\n";
  EXPECT_EQ(run({"fit", "--input", path("bad.tsv"), "--output", path("f.json")}).code, 2);
  EXPECT_EQ(run({"simulate", "--setup", "S7", "--output", path("s.tsv")}).code, 2);
  EXPECT_EQ(run({"simulate", "--m", "30", "--setup", "S2.1", "--output", path("s.tsv")}).code, 2);
}

TEST_F(Cli, SimulateIsReproducible) {
  ASSERT_EQ(run({"simulate", "--m", "10", "--seed", "1", "--output", path("a.tsv")}).code, 0);
  ASSERT_EQ(run({"simulate", "--m", "10", "--seed", "1", "--output", path("b.tsv")}).code, 0);
  EXPECT_EQ(slurp(path("a.tsv")), slurp(path("b.tsv")));
  EXPECT_EQ(slurp(path("a.tsv.json")), slurp(path("b.tsv.json")));
  EXPECT_NE(slurp(path("a.tsv")).find("truth"), std::string::npos);
}

TEST_F(Cli, ConfigFileAndFlagsPrecedence) {
  std::ofstream(path("c.cfg")) << "setup = S2.3\nm = 40\nseed = 3\n";
  ASSERT_EQ(run({"simulate", "--config", path("c.cfg"), "--m", "20", "--output", path("a.tsv")}).code, 0);
  const auto doc = nlohmann::json::parse(slurp(path("a.tsv.json")));
  std::size_t lines = 0;
  for (char ch : slurp(path("a.tsv"))) lines += ch == '\n';
  EXPECT_EQ(lines, 21u);
  std::ofstream(path("bad.cfg")) << "colour = red\n";
  EXPECT_EQ(run({"simulate", "--config", path("bad.cfg"), "--output", path("b.tsv")}).code, 2);
}

TEST_F(Cli, FitRejectEndToEnd) {
  ASSERT_EQ(run({"simulate", "--m", "3000", "--seed", "4", "--output", path("s.tsv")}).code, 0);
  const auto fit = run({"fit", "--input", path("s.tsv"), "--output", path("f.json")});
  ASSERT_EQ(fit.code, 0) << fit.err;
  const auto doc = nlohmann::json::parse(slurp(path("f.json")));
  EXPECT_TRUE(doc.contains("fit"));
  ASSERT_EQ(run({"reject", "--input", path("s.tsv"), "--output", path("r1.tsv"), "--alpha", "0.1"}).code, 0);
  ASSERT_EQ(run({"--threads", "3", "reject", "--input", path("s.tsv"), "--output", path("r2.tsv"),
                 "--alpha", "0.1"})
                .code,
            0);
  EXPECT_EQ(slurp(path("r1.tsv")), slurp(path("r2.tsv")));
  auto a = nlohmann::json::parse(slurp(path("r1.tsv.json")));
  auto b = nlohmann::json::parse(slurp(path("r2.tsv.json")));
  EXPECT_EQ(b["options"]["threads"], 3);
  a["options"].erase("threads");
  b["options"].erase("threads");
  EXPECT_EQ(a, b);
}

TEST_F(Cli, ConstantCovariateWarns) {
  std::ofstream f(path("c.tsv"));
  f << "id\tpvalue\tx\tc\n";
  for (int i = 0; i < 400; ++i) {
    f << "h" << i << '\t' << (i % 17 == 0 ? 1e-5 * (i + 1) : (i % 97 + 1) / 98.0) << '\t' << (i % 7) << "\t5\n";
  }
  f.close();
  const auto r = run({"fit", "--input", path("c.tsv"), "--output", path("f.json")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("collinear"), std::string::npos) << r.err;
}

TEST_F(Cli, EvaluateAndDiagnose) {
  const auto e = run({"evaluate", "--m", "500", "--reps", "2", "--methods", "bonferroni,holm",
                      "--alpha-grid", "0.05,0.1"});
  ASSERT_EQ(e.code, 0) << e.err;
  std::size_t lines = 0;
  for (char ch : e.out) lines += ch == '\n';
  EXPECT_EQ(lines, 5u);
  EXPECT_EQ(run({"evaluate", "--methods", "ihw", "--reps", "1"}).code, 2);
  const auto d = run({"diagnose", "--u-gamma", "0.05", "--output", path("d.json")});
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_NE(slurp(path("d.json")).find("4.93"), std::string::npos);
}

}  // namespace
