#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "camt/io.hpp"
#include "camt/pipeline.hpp"
#include "camt/simulation.hpp"

namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("camt_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path write(const std::string& name, const std::string& text) {
    const auto p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  fs::path dir_;
};

using IoTest = TempDir;

TEST_F(IoTest, RoundTripBitForBit) {
  camt::SimulationConfig config;
  config.m = 500;
  const auto study = camt::simulate(config);
  const auto path = dir_ / "t.tsv";
  camt::write_table(path, study.table, {"x"}, &study.truth);
  const auto back = camt::read_table(path);
  EXPECT_EQ(back.table.pvalues(), study.table.pvalues());
  EXPECT_EQ(back.table.covariates(), study.table.covariates());
  EXPECT_EQ(back.table.ids(), study.table.ids());
  ASSERT_TRUE(back.truth.has_value());
  EXPECT_EQ(*back.truth, study.truth);
  EXPECT_EQ(back.covariate_names, std::vector<std::string>{"x"});
  const auto again = dir_ / "u.tsv";
  camt::write_table(again, back.table, back.covariate_names, &*back.truth);
  EXPECT_EQ(slurp(path), slurp(again));
}

TEST_F(IoTest, CommaSeparatedAccepted) {
  const auto t = camt::read_table(write("c.csv", "id,pvalue,a,b\nx,0.5,1,2\ny,0.25,3,4\n"));
  EXPECT_EQ(t.table.m(), 2u);
  EXPECT_EQ(t.table.d(), 2u);
  EXPECT_EQ(t.table.row(1)[2], 4.0);
}

TEST_F(IoTest, ErrorsNameTheLine) {
  std::string text = "id\tpvalue\tx\n";
  for (int i = 1; i <= 5; ++i) text += "h" + std::to_string(i) + "\t0.5\t1\n";
  text += "h6\t1.5\t1\n";  // line 7
  try {
    camt::read_table(write("bad.tsv", text));
    FAIL();
  } catch (const camt::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos) << e.what();
  }
  EXPECT_THROW(camt::read_table(write("h.tsv", "id\tpvalue\n")), camt::ParseError);
  EXPECT_THROW(camt::read_table(write("f.tsv", "id\tpvalue\tx\na\t0.1\n")), camt::ParseError);
  EXPECT_THROW(camt::read_table(write("n.tsv", "id\tpvalue\na\tNA\n")), camt::ParseError);
  EXPECT_THROW(camt::read_table(write("s.tsv", "id\tpvalue\na\t0.1x\n")), camt::ParseError);
  EXPECT_THROW(camt::read_table(dir_ / "missing.tsv"), camt::IoError);
}

TEST_F(IoTest, DuplicateIdsWarn) {
  const auto t = camt::read_table(write("d.tsv", "id\tpvalue\na\t0.1\na\t0.2\n"));
  EXPECT_EQ(t.table.m(), 2u);
  ASSERT_EQ(t.warnings.size(), 1u);
}

TEST_F(IoTest, DecisionsFileCarriesThresholds) {
  const std::vector<double> none;
  const auto table = camt::HypothesisTable::with_intercept({"only"}, {0.9}, none, 0);
  camt::MixtureFit fit;
  fit.params = {{0.0}, 0.5};
  fit.gamma = 0.5;
  fit.eta = {0.0};
  fit.pi_tilde = fit.pi_hat = {0.5};
  const auto d = camt::decide(table, fit, 0.05);
  const auto path = dir_ / "dec.tsv";
  camt::write_decisions(path, table, fit, d, {{"seed", 3}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "id\tpvalue\tpi_hat\tweight\tthreshold\treject");
  std::vector<std::string> f;
  std::stringstream ss(row);
  for (std::string s; std::getline(ss, s, '\t');) f.push_back(s);
  ASSERT_EQ(f.size(), 6u);
  EXPECT_EQ(f[0], "only");
  EXPECT_NEAR(std::stod(f[4]), 0.025, 1e-15);
  EXPECT_EQ(f[5], "0");
  const auto doc = nlohmann::json::parse(slurp(camt::sidecar_path(path)));
  EXPECT_EQ(doc["seed"], 3);
  EXPECT_NEAR(doc["decisions"]["tau_tilde"].get<double>(), 3.162278, 5e-7);
  EXPECT_FALSE(fs::exists(dir_ / "dec.tsv.partial"));
}

TEST_F(IoTest, KeyValues) {
  const auto kv = camt::read_key_values(write("k.cfg", "# comment\nm = 40\n setup=S2.1 # trailing\n\n"));
  EXPECT_EQ(kv.at("m"), "40");
  EXPECT_EQ(kv.at("setup"), "S2.1");
  EXPECT_THROW(camt::read_key_values(write("b.cfg", "m 40\n")), camt::ParseError);
}

TEST(Standardize, MedianAndIqr) {
  std::vector<double> x{1, 2, 3, 4, 5}, c{7, 7, 7, 7, 7}, both;
  for (std::size_t i = 0; i < 5; ++i) {
    both.push_back(x[i]);
    both.push_back(c[i]);
  }
  auto t = camt::HypothesisTable::with_intercept({}, {0.1, 0.2, 0.3, 0.4, 0.5}, both, 2);
  const auto s = camt::standardize_covariates(t);
  EXPECT_EQ(s.center, (std::vector<double>{3.0, 7.0}));
  EXPECT_NEAR(s.scale[0], 2.0 / 1.349, 1e-15);
  EXPECT_EQ(s.scale[1], 1.0);
  EXPECT_EQ(s.constant_columns, (std::vector<std::size_t>{2}));
  EXPECT_NEAR(t.row(4)[1], 2.0 * 1.349 / 2.0, 1e-12);
  EXPECT_EQ(t.row(0)[2], 0.0);
}

}  // namespace
