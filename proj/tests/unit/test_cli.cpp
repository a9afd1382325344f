#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "balance/recording.hpp"
#include "fixtures.hpp"

#ifndef BALANCE_BIN
#error "BALANCE_BIN must point at the built balance executable"
#endif

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run balance_cli(const fixture::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(BALANCE_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Small separable cohort shared by the slower tests.
class CliCohort : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fixture::TempDir("cli");
    const auto r = balance_cli(*dir_, "--seed 4 --out " + q(dir_->path() / "cohort") + " simulate --preset separable --subjects 8");
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::filesystem::path manifest() { return dir_->path() / "cohort" / "manifest.json"; }
  static std::string evaluate(const std::filesystem::path& out, const std::string& model) {
    return "--seed 2 --out " + q(out) + " evaluate --manifest " + q(manifest()) + " --model " + model +
           " --budget 2 --k-outer 4 --k-inner 2";
  }
  static fixture::TempDir* dir_;
};

fixture::TempDir* CliCohort::dir_ = nullptr;

}  // namespace

TEST(Cli, HelpAndUsage) {
  fixture::TempDir dir("cli_help");
  const auto help = balance_cli(dir, "--help");
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("not clinical output"), std::string::npos);
  EXPECT_EQ(balance_cli(dir, "--bogus").code, 1);
  EXPECT_EQ(balance_cli(dir, "").code, 1);
  EXPECT_EQ(balance_cli(dir, "explain").code, 1);  // --run is required
}

TEST(Cli, UnsupportedModel) {
  fixture::TempDir dir("cli_gbdt");
  balance::write_manifest({}, dir / "m.json");
  const auto r = balance_cli(dir, "--out " + q(dir / "o") + " evaluate --manifest " + q(dir / "m.json") + " --model gbdt");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model not supported"), std::string::npos) << r.err;
}

TEST(Cli, EmptyManifestExtractsHeaderOnly) {
  fixture::TempDir dir("cli_empty");
  balance::write_manifest({}, dir / "m.json");
  const auto r = balance_cli(dir, "--out " + q(dir / "o") + " extract --manifest " + q(dir / "m.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "o" / "features.csv");
  std::size_t data = 0;
  bool header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind('#', 0) == 0) continue;
    if (!header) {
      header = line.rfind("subject_id", 0) == 0;
      continue;
    }
    ++data;
  }
  EXPECT_TRUE(header);
  EXPECT_EQ(data, 0u);
}

TEST(Cli, MissingArtifact) {
  fixture::TempDir dir("cli_missing");
  const auto r = balance_cli(dir, "--out " + q(dir / "o") + " explain --run " + q(dir / "nowhere"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("run.json"), std::string::npos) << r.err;
}

TEST_F(CliCohort, SkipBadSubjects) {
  fixture::TempDir dir("cli_bad");
  auto m = balance::read_manifest(manifest());
  for (auto& e : m.entries) e.recording = manifest().parent_path() / e.recording;
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "not,a,recording\n1,2\n";
  }
  m.entries[3].recording = dir / "bad.csv";
  balance::write_manifest(m, dir / "m.json");

  const auto strict = balance_cli(dir, "--out " + q(dir / "o1") + " extract --manifest " + q(dir / "m.json"));
  EXPECT_EQ(strict.code, 2);
  EXPECT_NE(strict.err.find(m.entries[3].meta.id), std::string::npos) << strict.err;

  const auto lenient = balance_cli(dir, "--out " + q(dir / "o2") + " extract --skip-bad --manifest " + q(dir / "m.json"));
  ASSERT_EQ(lenient.code, 0) << lenient.err;
  const auto log = slurp(dir / "o2" / "extract_log.csv");
  EXPECT_NE(log.find(m.entries[3].meta.id + ",0,0,0,skipped"), std::string::npos) << log;
  EXPECT_EQ(slurp(dir / "o2" / "features.csv").find(m.entries[3].meta.id + ","), std::string::npos);
}

TEST_F(CliCohort, EvaluateIsIdempotentAndExplainable) {
  fixture::TempDir dir("cli_eval");
  const auto a = balance_cli(dir, evaluate(dir / "a", "logistic"));
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = balance_cli(dir, evaluate(dir / "b", "logistic"));
  ASSERT_EQ(b.code, 0) << b.err;
  for (const char* f : {"summary.csv", "features.csv", "LB_vs_CN_logistic/report.json", "LB_vs_CN_logistic/predictions.csv",
                        "LB_vs_CN_logistic/plan.json", "LB_vs_CN_logistic/models/fold_00.json"}) {
    const auto fa = slurp(dir / "a" / f);
    EXPECT_FALSE(fa.empty()) << f;
    EXPECT_EQ(fa, slurp(dir / "b" / f)) << f;
  }

  const auto run = dir / "a" / "LB_vs_CN_logistic";
  const auto e1 = balance_cli(dir, "--out " + q(dir / "x1") + " explain --run " + q(run));
  ASSERT_EQ(e1.code, 0) << e1.err;
  const auto e2 = balance_cli(dir, "--out " + q(dir / "x2") + " explain --run " + q(run));
  ASSERT_EQ(e2.code, 0) << e2.err;
  const auto shap = slurp(dir / "x1" / "shap_summary.csv");
  EXPECT_EQ(shap, slurp(dir / "x2" / "shap_summary.csv"));
  std::istringstream lines(shap);
  std::size_t rows = 0;
  bool in_body = false;
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind('#', 0) == 0) continue;
    if (!in_body) {
      EXPECT_EQ(line, "feature,occurrence_rate,mean_abs_shap");
      in_body = true;
      continue;
    }
    ++rows;
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    EXPECT_EQ(line.substr(c1 + 1, c2 - c1 - 1), "1") << line;
  }
  EXPECT_EQ(rows, 18u);

  // Tampered fold model is refused.
  auto text = slurp(run / "models" / "fold_01.json");
  const auto pos = text.find("\"config_hash\": \"");
  ASSERT_NE(pos, std::string::npos);
  text[pos + 16] = text[pos + 16] == '0' ? '1' : '0';
  std::ofstream(run / "models" / "fold_01.json") << text;
  EXPECT_EQ(balance_cli(dir, "--out " + q(dir / "x3") + " explain --run " + q(run)).code, 2);
}

TEST_F(CliCohort, FeaturesFromAnotherExtractionAreRefused) {
  fixture::TempDir dir("cli_hash");
  ASSERT_EQ(balance_cli(dir, "--out " + q(dir / "e") + " extract --manifest " + q(manifest())).code, 0);
  std::ofstream(dir / "cfg.json") << R"({"extraction": {"noise_cutoff": 9.0}})";
  const auto r = balance_cli(dir, "--config " + q(dir / "cfg.json") + " --out " + q(dir / "o") +
                                      " evaluate --budget 1 --k-outer 4 --k-inner 2 --features " +
                                      q(dir / "e" / "features.csv") + " --manifest " + q(manifest()));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("extracted with settings"), std::string::npos) << r.err;
}

TEST_F(CliCohort, StatsWritesTables) {
  fixture::TempDir dir("cli_stats");
  const auto r = balance_cli(dir, "--out " + q(dir / "s") + " stats --mc-draws 2000 --manifest " + q(manifest()));
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"group_tests.csv", "correlations.csv", "demographics.csv"}) {
    EXPECT_FALSE(slurp(dir / "s" / f).empty()) << f;
  }
}
