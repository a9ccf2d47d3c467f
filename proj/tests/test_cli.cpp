#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sqc/cli.hpp"

using namespace sqc;
namespace fs = std::filesystem;

namespace {

const fs::path source_dir = SQC_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<double> numbers(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(std::stod(cell));
  return out;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("sqc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Json penalty_json() { return Json::parse(slurp(source_dir / "scenarios" / "penalty.json")); }

}  // namespace

TEST(ScenarioFile, BundledScenariosParse) {
  for (const char* name : {"penalty", "barrier", "doublewell", "vdp_filter"}) {
    const Scenario s = parse_scenario((source_dir / "scenarios" / (std::string(name) + ".json")).string());
    EXPECT_EQ(s.name, name);
    EXPECT_EQ(s.state_dim(), 2);
  }
}

TEST(ScenarioFile, RoundTrip) {
  for (const char* name : {"penalty", "barrier", "doublewell", "vdp_filter"}) {
    const Scenario s = parse_scenario((source_dir / "scenarios" / (std::string(name) + ".json")).string());
    const std::string text = write_scenario(s);
    const Scenario again = parse_scenario_text(text);
    EXPECT_TRUE(again == s) << name;
    EXPECT_EQ(write_scenario(again), text);
  }
}

TEST(ScenarioFile, UnknownKeyRejected) {
  Json j = penalty_json();
  j["potential"]["params"]["sigma"] = 1.0;
  try {
    scenario_from_json(j);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("sigma"), std::string::npos);
  }
  Json top = penalty_json();
  top["extra"] = 1;
  EXPECT_THROW(scenario_from_json(top), ParseError);
}

TEST(ScenarioFile, SigmaNuMustBeSpd) {
  Json j = penalty_json();
  j["potential"]["params"]["sigma_nu"] = Json::parse("[[0.001, 0.0], [0.0, -0.0001]]");
  try {
    validate_scenario(scenario_from_json(j));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("sigma_nu not positive definite"), std::string::npos);
  }
}

TEST(ScenarioFile, FlatArrayIsDiagonal) {
  Json j = penalty_json();
  j["process"]["g_inv"] = Json::parse("[0.001, 0.002]");
  const Scenario s = scenario_from_json(j);
  EXPECT_EQ(s.g_inv(1, 1), 0.002);
  EXPECT_EQ(s.g_inv(0, 1), 0.0);
}

TEST(ScenarioFile, TextErrors) {
  EXPECT_THROW(parse_scenario_text(""), ParseError);
  EXPECT_THROW(parse_scenario_text("{\n  \"name\": \n"), ParseError);
  try {
    parse_scenario_text("{\n\"name\": \"x\",\n oops\n}");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_scenario("/nonexistent/scenario.json"), Error);
}

TEST(ScenarioFile, ValidationCatchesShapes) {
  Scenario s = parse_scenario((source_dir / "scenarios" / "penalty.json").string());
  s.initial_cov = Matrix::Identity(3, 3);
  EXPECT_THROW(validate_scenario(s), Error);
  s = parse_scenario((source_dir / "scenarios" / "penalty.json").string());
  s.dt = 0.0;
  EXPECT_THROW(validate_scenario(s), ValidationError);
}

TEST(SeedRange, Parse) {
  const auto r = cli::parse_seed_range("3..7");
  EXPECT_EQ(r.first, 3u);
  EXPECT_EQ(r.last, 7u);
  EXPECT_THROW(cli::parse_seed_range("7..3"), ValidationError);
  EXPECT_THROW(cli::parse_seed_range("3-7"), ValidationError);
  EXPECT_THROW(cli::parse_seed_range("a..b"), ValidationError);
}

TEST(Simulate, OneStepGivesTwoRows) {
  TempDir dir;
  cli::SimulateOptions opt;
  opt.steps = 1;
  opt.out = dir.path();
  std::ostringstream log, err;
  const Scenario s = parse_scenario((source_dir / "scenarios" / "penalty.json").string());
  ASSERT_EQ(cli::cmd_simulate(s, opt, log, err), cli::ExitCode::ok) << err.str();
  const auto rows = lines(dir.path() / "trajectory.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], cli::trajectory_header(2, 2));
  EXPECT_EQ(numbers(rows[1]).front(), 0.0);
  EXPECT_EQ(numbers(rows[2]).front(), 1.0);
  EXPECT_EQ(numbers(rows[2]).size(), numbers(rows[1]).size());
}

TEST(Simulate, DeterministicForFixedSeed) {
  TempDir a, b;
  const Scenario s = parse_scenario((source_dir / "scenarios" / "doublewell.json").string());
  cli::SimulateOptions opt;
  opt.steps = 100;
  opt.seed = 5;
  std::ostringstream log, err;
  opt.out = a.path();
  ASSERT_EQ(cli::cmd_simulate(s, opt, log, err), cli::ExitCode::ok);
  opt.out = b.path();
  ASSERT_EQ(cli::cmd_simulate(s, opt, log, err), cli::ExitCode::ok);
  EXPECT_EQ(slurp(a.path() / "trajectory.csv"), slurp(b.path() / "trajectory.csv"));
}

TEST(Simulate, SeedSweepWritesSubdirectories) {
  TempDir dir;
  cli::SimulateOptions opt;
  opt.steps = 20;
  opt.seeds = cli::parse_seed_range("2..4");
  opt.out = dir.path();
  std::ostringstream log, err;
  ASSERT_EQ(cli::cmd_simulate(parse_scenario((source_dir / "scenarios" / "penalty.json").string()), opt, log, err),
            cli::ExitCode::ok);
  for (int s = 2; s <= 4; ++s) {
    EXPECT_EQ(lines(dir.path() / ("seed_" + std::to_string(s)) / "trajectory.csv").size(), 22u);
  }
  EXPECT_FALSE(fs::exists(dir.path() / "seed_5"));
}

TEST(Simulate, DomainViolationWritesDiagnostic) {
  TempDir dir;
  Scenario s = parse_scenario((source_dir / "scenarios" / "barrier.json").string());
  s.initial_mean = Vector::Constant(2, -1.0);
  cli::SimulateOptions opt;
  opt.steps = 10;
  opt.out = dir.path();
  std::ostringstream log, err;
  EXPECT_EQ(cli::cmd_simulate(s, opt, log, err), cli::ExitCode::domain_violation);
  EXPECT_TRUE(fs::exists(dir.path() / "diagnostic.json"));
  EXPECT_NE(err.str().find("domain violation"), std::string::npos);
}

TEST(Simulate, RejectsObservationPotential) {
  TempDir dir;
  cli::SimulateOptions opt;
  opt.out = dir.path();
  std::ostringstream log, err;
  EXPECT_EQ(cli::cmd_simulate(parse_scenario((source_dir / "scenarios" / "vdp_filter.json").string()), opt, log, err),
            cli::ExitCode::failure);
}

TEST(Filter, MatchesIndependentKalmanFixture) {
  TempDir dir;
  std::ostringstream log, err;
  const auto fixtures = source_dir / "tests" / "fixtures";
  const Scenario s = parse_scenario((fixtures / "linear_gaussian.json").string());
  ASSERT_EQ(cli::cmd_filter(s, fixtures / "linear_gaussian_obs.csv", dir.path(), log, err), cli::ExitCode::ok)
      << err.str();
  const auto got = lines(dir.path() / "beliefs.csv");
  const auto want = lines(fixtures / "linear_gaussian_beliefs.csv");
  ASSERT_EQ(got.size(), want.size());
  EXPECT_EQ(got[0], want[0]);
  double worst = 0.0;
  for (std::size_t i = 1; i < got.size(); ++i) {
    const auto a = numbers(got[i]), b = numbers(want[i]);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t j = 0; j < a.size(); ++j) worst = std::max(worst, std::abs(a[j] - b[j]) / (1.0 + std::abs(b[j])));
  }
  EXPECT_LE(worst, 1e-9);
  EXPECT_EQ(log.str().rfind("log-likelihood ", 0), 0u);
}

TEST(Filter, EmptyObservationsPredictOnly) {
  const auto fixtures = source_dir / "tests" / "fixtures";
  const Scenario s = parse_scenario((fixtures / "linear_gaussian.json").string());
  for (const char* name : {"empty_obs.csv", "blank_obs.csv"}) {
    TempDir dir;
    std::ostringstream log, err;
    ASSERT_EQ(cli::cmd_filter(s, fixtures / name, dir.path(), log, err), cli::ExitCode::ok) << err.str();
    const auto rows = lines(dir.path() / "beliefs.csv");
    EXPECT_EQ(rows.size(), static_cast<std::size_t>(s.horizon) + 2);
    EXPECT_EQ(numbers(rows.back()).back(), 0.0);
    EXPECT_NE(log.str().find("log-likelihood 0"), std::string::npos);
  }
}

TEST(Filter, MissingFileAndWidthMismatchFail) {
  TempDir dir;
  std::ostringstream log, err;
  const Scenario s = parse_scenario((source_dir / "scenarios" / "vdp_filter.json").string());
  EXPECT_EQ(cli::cmd_filter(s, dir.path() / "missing.csv", dir.path(), log, err), cli::ExitCode::failure);
  std::ofstream(dir.path() / "wide.csv") << "step,y1,y2\n0,1,2\n";
  EXPECT_EQ(cli::cmd_filter(s, dir.path() / "wide.csv", dir.path(), log, err), cli::ExitCode::failure);
}

TEST(Validate, FastPassesAndMutationFails) {
  const Json ok = cli::validation_report(cli::Level::fast);
  EXPECT_TRUE(ok.at("passed").get<bool>());
  EXPECT_GT(ok.at("identity_suite").at("skipped").get<int>(), 0);
  EXPECT_FALSE(ok.contains("forward_equation"));
  const Json bad = cli::validation_report(cli::Level::fast, cli::Mutation::gain_sign);
  EXPECT_FALSE(bad.at("passed").get<bool>());
}

TEST(Validate, WritesReportFile) {
  TempDir dir;
  std::ostringstream log, err;
  EXPECT_EQ(cli::cmd_validate(cli::Level::fast, dir.path(), cli::Mutation::none, log, err), cli::ExitCode::ok);
  const Json j = Json::parse(slurp(dir.path() / "validation.json"));
  EXPECT_TRUE(j.at("passed").get<bool>());
  EXPECT_THROW(cli::parse_level("slow"), ValidationError);
  EXPECT_THROW(cli::parse_mutation("flip"), ValidationError);
}
