#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "sqc/oracle.hpp"
#include "sqc/scenario.hpp"

namespace sqc::cli {

enum ExitCode : int { ok = 0, failure = 1, domain_violation = 2 };

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trajectory_header(Eigen::Index m, Eigen::Index l) {
  std::string h = "step";
  for (Eigen::Index i = 1; i <= m; ++i) h += ",x" + std::to_string(i);
  for (Eigen::Index i = 1; i <= l; ++i) h += ",u" + std::to_string(i);
  for (Eigen::Index i = 1; i <= m; ++i) h += ",mean" + std::to_string(i);
  for (Eigen::Index i = 1; i <= m; ++i)
    for (Eigen::Index j = 1; j <= m; ++j) h += ",cov" + std::to_string(i) + std::to_string(j);
  return h + ",V,logN";
}

inline void write_trajectory_csv(std::ostream& out, const ScenarioRun& run, Eigen::Index m, Eigen::Index l) {
  out << trajectory_header(m, l) << '\n';
  for (const auto& r : run.records) {
    out << r.step;
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << fmt17(r.state(i));
    for (Eigen::Index i = 0; i < l; ++i) out << ',' << fmt17(r.control(i));
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << fmt17(r.mean(i));
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) out << ',' << fmt17(r.cov(i, j));
    out << ',' << fmt17(r.potential_value) << ',' << fmt17(r.log_N) << '\n';
  }
}

struct SeedRange {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
};

/// "a..b" (inclusive).
inline SeedRange parse_seed_range(const std::string& s) {
  const auto dots = s.find("..");
  if (dots == std::string::npos) throw ValidationError("seed range must look like a..b");
  try {
    std::size_t used = 0;
    const std::string a = s.substr(0, dots), b = s.substr(dots + 2);
    SeedRange r{std::stoull(a, &used), 0};
    if (used != a.size()) throw std::invalid_argument(a);
    r.last = std::stoull(b, &used);
    if (used != b.size()) throw std::invalid_argument(b);
    if (r.last < r.first) throw ValidationError("seed range is empty: " + s);
    return r;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception&) {
    throw ValidationError("seed range must look like a..b, got '" + s + "'");
  }
}

struct SimulateOptions {
  std::optional<std::uint64_t> seed;
  std::optional<Step> steps;
  std::optional<Mode> mode;
  std::optional<SeedRange> seeds;
  std::filesystem::path out = ".";
};

namespace detail {

inline int write_run(const ScenarioRun& run, const ControlScenario& sc, const std::filesystem::path& dir,
                     std::ostream& err) {
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / "trajectory.csv";
  std::ofstream csv(csv_path);
  if (!csv) {
    err << "error: cannot write " << csv_path.string() << '\n';
    return ExitCode::failure;
  }
  write_trajectory_csv(csv, run, sc.model.dim(), sc.control.input_dim());
  csv.close();
  if (!csv) {
    err << "error: write failed for " << csv_path.string() << '\n';
    return ExitCode::failure;
  }
  if (!run.failed) return ExitCode::ok;

  const Json diag{{"scenario", sc.name},
                  {"seed", sc.seed},
                  {"error", "DomainViolation"},
                  {"message", run.failure},
                  {"failed_at_step", run.failed_at},
                  {"rows_written", run.records.size()}};
  std::ofstream dj(dir / "diagnostic.json");
  dj << diag.dump(2) << '\n';
  err << "domain violation at step " << run.failed_at << " (seed " << sc.seed << "): " << run.failure << '\n';
  return ExitCode::domain_violation;
}

}  // namespace detail

/// Runs the scenario (or a seed sweep) and writes trajectory.csv. Exit code
/// 0 on success, 2 if a run hit a DomainViolation, 1 on any other error.
inline int cmd_simulate(Scenario scenario, const SimulateOptions& opt, std::ostream& log = std::cout,
                        std::ostream& err = std::cerr) {
  try {
    if (opt.steps) scenario.horizon = *opt.steps;
    if (opt.mode) scenario.mode = *opt.mode;
    if (opt.seed) scenario.seed = *opt.seed;
    validate_scenario(scenario);
    ControlScenario sc = scenario.control_scenario();

    if (!opt.seeds) {
      const ScenarioRun run = run_scenario(sc, RandomStream(sc.seed, 0));
      const int code = detail::write_run(run, sc, opt.out, err);
      log << scenario.name << ": " << run.records.size() << " rows -> " << (opt.out / "trajectory.csv").string()
          << '\n';
      return code;
    }

    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = opt.seeds->first;; ++s) {
      seeds.push_back(s);
      if (s == opt.seeds->last) break;
    }
    const auto runs = run_seeds(sc, seeds);
    int code = ExitCode::ok;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      sc.seed = seeds[i];
      const int c = detail::write_run(runs[i], sc, opt.out / ("seed_" + std::to_string(seeds[i])), err);
      code = std::max(code, c);
    }
    log << scenario.name << ": " << seeds.size() << " seeds -> " << opt.out.string() << '\n';
    return code;
  } catch (const DomainViolation& e) {
    err << "domain violation: " << e.what() << '\n';
    return ExitCode::domain_violation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return ExitCode::failure;
  }
}

inline std::string beliefs_header(Eigen::Index m) {
  std::string h = "step";
  for (Eigen::Index i = 1; i <= m; ++i) h += ",mean" + std::to_string(i);
  for (Eigen::Index i = 1; i <= m; ++i)
    for (Eigen::Index j = 1; j <= m; ++j) h += ",cov" + std::to_string(i) + std::to_string(j);
  return h + ",loglik";
}

inline void write_beliefs_csv(std::ostream& out, const FilterResult& r) {
  const Eigen::Index m = r.beliefs.empty() ? 0 : r.beliefs.front().dim();
  out << beliefs_header(m) << '\n';
  for (std::size_t t = 0; t < r.beliefs.size(); ++t) {
    const auto& b = r.beliefs[t];
    out << b.step;
    for (Eigen::Index i = 0; i < m; ++i) out << ',' << fmt17(b.mean(i));
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) out << ',' << fmt17(b.cov(i, j));
    out << ',' << fmt17(r.log_likelihood[t]) << '\n';
  }
}

/// Filters the observation CSV through the scenario's process and linear
/// observation model; writes beliefs.csv and prints the cumulative
/// log-likelihood.
inline int cmd_filter(const Scenario& scenario, const std::filesystem::path& obs_path,
                      const std::filesystem::path& out_dir, std::ostream& log = std::cout,
                      std::ostream& err = std::cerr) {
  try {
    std::ifstream in(obs_path);
    if (!in) {
      err << "error: cannot open observations '" << obs_path.string() << "'\n";
      return ExitCode::failure;
    }
    const ObservationStream stream = read_observation_csv(in);
    const ObservationModel obs = scenario.observation_model();
    if (!stream.empty() && stream.entries().front().y.size() != obs.obs_dim()) {
      err << "error: observation width " << stream.entries().front().y.size() << " does not match the model ("
          << obs.obs_dim() << ")\n";
      return ExitCode::failure;
    }
    const GaussianBelief initial{scenario.initial_mean, SymMatrix(scenario.initial_cov), 0, BeliefTag::initial};
    const FilterResult result = run_filter(scenario.process(), obs, stream, initial, scenario.horizon);

    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir / "beliefs.csv");
    if (!csv) {
      err << "error: cannot write " << (out_dir / "beliefs.csv").string() << '\n';
      return ExitCode::failure;
    }
    write_beliefs_csv(csv, result);
    log << "log-likelihood " << fmt17(result.total_log_likelihood) << '\n';
    return ExitCode::ok;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return ExitCode::failure;
  }
}

enum class Level { fast, full };

inline Level parse_level(const std::string& s) {
  if (s == "fast") return Level::fast;
  if (s == "full") return Level::full;
  throw ValidationError("unknown level '" + s + "' (expected fast|full)");
}

/// Deliberate defects used to prove the suite can fail.
enum class Mutation { none, gain_sign };

inline Mutation parse_mutation(const std::string& s) {
  if (s == "none") return Mutation::none;
  if (s == "gain-sign") return Mutation::gain_sign;
  throw ValidationError("unknown mutation '" + s + "' (expected none|gain-sign)");
}

inline oracle::UpdateFn mutated_update(Mutation m) {
  if (m == Mutation::gain_sign) {
    return [](const GaussianBelief& b, const PotentialEvaluation& p, double dt) {
      GaussianBelief out = update(b, p, dt);
      out.mean = b.mean - (out.mean - b.mean);
      return out;
    };
  }
  return [](const GaussianBelief& b, const PotentialEvaluation& p, double dt) { return update(b, p, dt); };
}

namespace detail {

inline Json check_json(const std::string& name, double error, double tolerance) {
  return Json{{"name", name}, {"error", error}, {"tolerance", tolerance}, {"passed", error <= tolerance}};
}

inline Json stats_json(const oracle::CheckStats& s) {
  return Json{{"failures", s.failures}, {"max_error", s.max_error}};
}

/// Quadratic potentials in dims 1-2 plus the scalar example and the barrier
/// expansion-error bound.
inline Json quadrature_checks(const oracle::UpdateFn& update_fn, std::uint64_t seed) {
  Json cases = Json::array();
  {
    GaussianBelief pred{Vector::Zero(1), SymMatrix::identity(1), 1, BeliefTag::predicted};
    const Potential pot = Potential::quadratic_penalty(constant_target(Vector::Ones(1)), SymMatrix::identity(1));
    const auto e = oracle::expansion_error(pred, pot, 1.0, 64, update_fn);
    const double err = std::max({std::abs(e.exact.mean(0) - 0.5), std::abs(e.exact.cov(0, 0) - 0.5),
                                 e.mean_rel_error, e.cov_rel_error});
    cases.push_back(check_json("scalar quadratic", err, 1e-8));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index m = 1 + trial % 2;
    const auto inst = oracle::random_instance(rng, m, m);
    Vector d(m);
    for (Eigen::Index i = 0; i < m; ++i) d(i) = nd(rng);
    const Potential pot = Potential::quadratic_penalty(constant_target(d), inst.potential.curvature);
    const auto e = oracle::expansion_error(inst.predicted, pot, inst.dt, 64, update_fn);
    const double err = std::max({relative_difference(e.engine.mean, e.exact.mean), e.cov_rel_error});
    cases.push_back(check_json("quadratic dim " + std::to_string(m) + " #" + std::to_string(trial), err, 1e-8));
  }
  {
    GaussianBelief pred{Vector::Ones(1), SymMatrix::scaled_identity(1, 0.01), 1, BeliefTag::predicted};
    const auto e = oracle::expansion_error(pred, Potential::log_barrier(Vector::Constant(1, 10.0)), 1.0, 64, update_fn);
    cases.push_back(check_json("barrier expansion scalar", e.mean_rel_error, 0.05));
  }
  {
    GaussianBelief pred{Vector::Ones(2), SymMatrix::scaled_identity(2, 0.01), 1, BeliefTag::predicted};
    const auto e = oracle::expansion_error(pred, Potential::log_barrier(Vector::Constant(2, 10.0)), 1.0, 64, update_fn);
    cases.push_back(check_json("barrier expansion 2d", e.mean_rel_error, 0.05));
  }
  return cases;
}

inline Json forward_equation_checks() {
  Json cases = Json::array();
  auto study_json = [&](const std::string& name, const oracle::ForwardProblem1D& p) {
    const auto st = oracle::fokker_planck_convergence(p, 0.0, 1.0);
    bool ok = true;
    for (double r : st.ratios) ok = ok && r >= 1.5 && r <= 3.0;
    Json j{{"name", name}, {"dts", st.dts}, {"residuals", st.residuals}, {"ratios", st.ratios},
           {"ratio_band", {1.5, 3.0}}};
    if (name == "constant potential") {
      double worst = 0.0;
      for (std::size_t i = 0; i < st.dts.size(); ++i) {
        const double dt = st.dts[i];
        worst = std::max(worst, std::abs(st.mass_ratios[i] - std::exp(-0.5 * dt)) / (dt * dt));
      }
      j["mass_decay_error_over_dt2"] = worst;
      ok = ok && worst <= 1.0;
    }
    j["passed"] = ok;
    cases.push_back(j);
  };
  oracle::ForwardProblem1D zero;
  study_json("zero drift", zero);
  oracle::ForwardProblem1D linear;
  linear.drift = [](double x) { return -x; };
  study_json("linear drift", linear);
  oracle::ForwardProblem1D constant;
  constant.potential = [](double) { return 0.5; };
  study_json("constant potential", constant);
  return cases;
}

inline bool all_passed(const Json& cases) {
  for (const auto& c : cases) {
    if (!c.at("passed").get<bool>()) return false;
  }
  return true;
}

}  // namespace detail

/// Builds the validation report. `passed` is true iff every check passed.
inline Json validation_report(Level level, Mutation mutation = Mutation::none, std::uint64_t seed = 20240501) {
  const auto start = std::chrono::steady_clock::now();
  oracle::IdentitySuiteOptions opt;
  opt.seed = seed;
  opt.trials = 500;
  opt.gain_update = mutated_update(mutation);
  const oracle::IdentityReport rep = oracle::identity_suite(opt);

  Json report;
  report["level"] = level == Level::fast ? "fast" : "full";
  if (mutation != Mutation::none) report["mutation"] = "gain-sign";
  report["identity_suite"] = Json{{"trials", rep.trials},
                                  {"skipped", rep.skipped},
                                  {"failures", rep.failures()},
                                  {"update_forms", detail::stats_json(rep.update_forms)},
                                  {"covariance_forms", detail::stats_json(rep.covariance_forms)},
                                  {"determinant", detail::stats_json(rep.determinant)},
                                  {"gauge", detail::stats_json(rep.gauge)},
                                  {"notes", rep.failure_notes},
                                  {"passed", rep.passed()}};
  const Json quad = detail::quadrature_checks(opt.gain_update, seed + 1);
  report["quadrature"] = Json{{"cases", quad}, {"passed", detail::all_passed(quad)}};
  bool passed = rep.passed() && detail::all_passed(quad);
  if (level == Level::full) {
    const Json fp = detail::forward_equation_checks();
    report["forward_equation"] = Json{{"cases", fp}, {"passed", detail::all_passed(fp)}};
    passed = passed && detail::all_passed(fp);
  }
  report["passed"] = passed;
  report["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline int cmd_validate(Level level, const std::optional<std::filesystem::path>& out_dir,
                        Mutation mutation = Mutation::none, std::ostream& log = std::cout,
                        std::ostream& err = std::cerr) {
  try {
    const Json report = validation_report(level, mutation);
    const std::string text = report.dump(2);
    if (out_dir) {
      std::filesystem::create_directories(*out_dir);
      std::ofstream f(*out_dir / "validation.json");
      if (!f) {
        err << "error: cannot write " << (*out_dir / "validation.json").string() << '\n';
        return ExitCode::failure;
      }
      f << text << '\n';
    }
    log << text << '\n';
    return report.at("passed").get<bool>() ? ExitCode::ok : ExitCode::failure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return ExitCode::failure;
  }
}

}  // namespace sqc::cli
