#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "json.hpp"
#include "sqc/control.hpp"
#include "sqc/ekf.hpp"

namespace sqc {

using Json = nlohmann::ordered_json;

struct DriftSpec {
  std::string kind = "vanderpol_forced";  // vanderpol_forced | zero | linear
  drift::VanDerPolParams vdp;
  Matrix a;  // linear only

  bool operator==(const DriftSpec& o) const {
    return kind == o.kind && vdp.coefficient == o.vdp.coefficient && vdp.forcing == o.vdp.forcing &&
           vdp.frequency == o.vdp.frequency && a.rows() == o.a.rows() && a.cols() == o.a.cols() && a == o.a;
  }
};

struct TargetSpec {
  std::string kind = "constant";  // constant | tanh
  Vector d;
  TanhTargetParams tanh;

  bool operator==(const TargetSpec& o) const {
    return kind == o.kind && d.size() == o.d.size() && d == o.d && tanh.amplitude == o.tanh.amplitude &&
           tanh.rate == o.tanh.rate && tanh.center == o.tanh.center && tanh.dim == o.tanh.dim;
  }
};

struct PotentialSpec {
  std::string kind;  // quadratic_penalty | log_barrier | double_well | observation
  Matrix sigma_nu;   // quadratic_penalty, double_well, observation
  Vector a;          // log_barrier
  Matrix c;          // observation: h(x) = C x
  std::optional<TargetSpec> target;

  bool operator==(const PotentialSpec& o) const {
    auto same = [](const auto& x, const auto& y) { return x.rows() == y.rows() && x.cols() == y.cols() && x == y; };
    return kind == o.kind && same(sigma_nu, o.sigma_nu) && same(a, o.a) && same(c, o.c) && target == o.target;
  }
};

/// A validated scenario file. `build()` turns it into runnable objects.
struct Scenario {
  std::string name;
  DriftSpec drift;
  Matrix g_inv;
  double dt = 1.0;
  PotentialSpec potential;
  Vector initial_mean;
  Matrix initial_cov;
  Matrix b;
  Matrix r;
  Step horizon = 5000;
  std::uint64_t seed = 0;
  Mode mode = Mode::sampled;

  bool operator==(const Scenario& o) const {
    auto same = [](const auto& x, const auto& y) { return x.rows() == y.rows() && x.cols() == y.cols() && x == y; };
    return name == o.name && drift == o.drift && same(g_inv, o.g_inv) && dt == o.dt && potential == o.potential &&
           same(initial_mean, o.initial_mean) && same(initial_cov, o.initial_cov) && same(b, o.b) && same(r, o.r) &&
           horizon == o.horizon && seed == o.seed && mode == o.mode;
  }

  Eigen::Index state_dim() const { return initial_mean.size(); }

  ItoProcessModel process() const;
  ControlScenario control_scenario() const;
  ObservationModel observation_model() const;
};

namespace detail {

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  void only(std::initializer_list<const char*> keys) const {
    if (!j_.is_object()) fail("expected an object");
    for (const auto& [k, v] : j_.items()) {
      bool known = false;
      for (const char* a : keys) known = known || k == a;
      if (!known) fail("unknown key '" + k + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader at(const char* key) const {
    if (!j_.contains(key)) fail(std::string("missing key '") + key + "'");
    return Reader(j_.at(key), sub(key));
  }

  double number(const char* key) const { return at(key).as_number(); }
  double number_or(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

  double as_number() const {
    if (!j_.is_number()) fail("expected a number");
    return j_.get<double>();
  }

  std::int64_t as_integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<std::int64_t>();
  }

  std::string as_string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  Vector as_vector() const {
    if (!j_.is_array() || j_.empty()) fail("expected a non-empty array of numbers");
    Vector v(static_cast<Eigen::Index>(j_.size()));
    for (std::size_t i = 0; i < j_.size(); ++i) {
      if (!j_[i].is_number()) Reader(j_[i], path_ + "[" + std::to_string(i) + "]").fail("expected a number");
      v(static_cast<Eigen::Index>(i)) = j_[i].get<double>();
    }
    return v;
  }

  /// A matrix is an array of rows. A flat array is read as a diagonal.
  Matrix as_matrix() const {
    if (!j_.is_array() || j_.empty()) fail("expected a non-empty array");
    if (!j_[0].is_array()) return Matrix(as_vector().asDiagonal());
    const std::size_t cols = j_[0].size();
    Matrix m(static_cast<Eigen::Index>(j_.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < j_.size(); ++i) {
      const Reader row(j_[i], path_ + "[" + std::to_string(i) + "]");
      const Vector v = row.as_vector();
      if (static_cast<std::size_t>(v.size()) != cols) row.fail("ragged matrix row");
      m.row(static_cast<Eigen::Index>(i)) = v.transpose();
    }
    return m;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("scenario field '" + (path_.empty() ? std::string("<root>") : path_) + "': " + what);
  }

 private:
  std::string sub(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json& j_;
  std::string path_;
};

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

inline void require_spd(const Matrix& m, const std::string& what) {
  if (m.rows() != m.cols() || !m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff())) {
    throw ValidationError(what + " not positive definite");
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw ValidationError(what + " not positive definite");
}

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ValidationError(what + " must be " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace detail

/// Checks every invariant a runnable scenario needs. Throws ValidationError
/// naming the first failure.
inline void validate_scenario(const Scenario& s) {
  const Eigen::Index m = s.state_dim();
  if (m < 1) throw ValidationError("initial mean must be non-empty");
  if (!s.initial_mean.allFinite()) throw ValidationError("initial mean not finite");
  if (!(s.dt > 0.0) || !std::isfinite(s.dt)) throw ValidationError("dt must be positive");
  if (s.horizon < 1) throw ValidationError("horizon must be >= 1");
  detail::require_shape(s.initial_cov, m, m, "initial cov");
  detail::require_spd(s.initial_cov, "initial cov");
  detail::require_shape(s.g_inv, m, m, "g_inv");
  if (!s.g_inv.isZero(0.0)) detail::require_spd(s.g_inv, "g_inv");

  if (s.drift.kind == "linear") {
    detail::require_shape(s.drift.a, m, m, "drift A");
  } else if (s.drift.kind == "vanderpol_forced") {
    if (m != 2) throw ValidationError("vanderpol_forced drift needs a 2-dimensional state");
  } else if (s.drift.kind != "zero") {
    throw ValidationError("unknown drift kind '" + s.drift.kind + "' (expected vanderpol_forced|zero|linear)");
  }

  const auto& p = s.potential;
  if (p.kind == "quadratic_penalty" || p.kind == "double_well") {
    detail::require_shape(p.sigma_nu, m, m, "sigma_nu");
    detail::require_spd(p.sigma_nu, "sigma_nu");
    if (!p.target) throw ValidationError(p.kind + " needs a target");
    if (p.target->kind == "constant") {
      if (p.target->d.size() != m) throw ValidationError("target d must have the state dimension");
    } else if (p.target->kind == "tanh") {
      if (p.target->tanh.dim != m) throw ValidationError("tanh target dim must equal the state dimension");
    } else {
      throw ValidationError("unknown target kind '" + p.target->kind + "' (expected constant|tanh)");
    }
  } else if (p.kind == "log_barrier") {
    if (p.a.size() != m) throw ValidationError("barrier weights a must have the state dimension");
    if (!(p.a.array() > 0.0).all()) throw ValidationError("barrier weights a must be positive");
    if (p.target) throw ValidationError("log_barrier takes no target");
  } else if (p.kind == "observation") {
    if (p.c.cols() != m || p.c.rows() < 1) throw ValidationError("observation C must be k x m");
    detail::require_shape(p.sigma_nu, p.c.rows(), p.c.rows(), "sigma_nu");
    detail::require_spd(p.sigma_nu, "sigma_nu");
    if (p.target) throw ValidationError("observation takes no target");
  } else {
    throw ValidationError("unknown potential kind '" + p.kind +
                          "' (expected quadratic_penalty|log_barrier|double_well|observation)");
  }

  if (s.b.rows() != m || s.b.cols() < 1) throw ValidationError("control B must be m x l");
  detail::require_shape(s.r, s.b.cols(), s.b.cols(), "control R");
  detail::require_spd(s.r, "control R");
  detail::require_spd(Matrix(s.b * s.r.inverse() * s.b.transpose()), "control B R^-1 B^T");
}

inline Scenario scenario_from_json(const Json& j) {
  const detail::Reader root(j, "");
  root.only({"name", "process", "potential", "initial", "control", "horizon", "seed", "mode"});
  Scenario s;
  s.name = root.at("name").as_string();

  const auto process = root.at("process");
  process.only({"drift", "g_inv", "dt"});
  const auto drift = process.at("drift");
  drift.only({"kind", "params"});
  s.drift.kind = drift.at("kind").as_string();
  if (drift.has("params")) {
    const auto params = drift.at("params");
    if (s.drift.kind == "vanderpol_forced") {
      params.only({"coefficient", "forcing", "frequency"});
      s.drift.vdp.coefficient = params.number_or("coefficient", s.drift.vdp.coefficient);
      s.drift.vdp.forcing = params.number_or("forcing", s.drift.vdp.forcing);
      s.drift.vdp.frequency = params.number_or("frequency", s.drift.vdp.frequency);
    } else if (s.drift.kind == "linear") {
      params.only({"A"});
      s.drift.a = params.at("A").as_matrix();
    } else {
      params.only({});
    }
  } else if (s.drift.kind == "linear") {
    drift.at("params");
  }
  s.g_inv = process.at("g_inv").as_matrix();
  s.dt = process.number_or("dt", 1.0);
  s.drift.vdp.dt = s.dt;

  const auto pot = root.at("potential");
  pot.only({"kind", "params", "target"});
  s.potential.kind = pot.at("kind").as_string();
  const auto params = pot.at("params");
  if (s.potential.kind == "quadratic_penalty" || s.potential.kind == "double_well") {
    params.only({"sigma_nu"});
    s.potential.sigma_nu = params.at("sigma_nu").as_matrix();
  } else if (s.potential.kind == "log_barrier") {
    params.only({"a"});
    s.potential.a = params.at("a").as_vector();
  } else if (s.potential.kind == "observation") {
    params.only({"C", "sigma_nu"});
    s.potential.c = params.at("C").as_matrix();
    s.potential.sigma_nu = params.at("sigma_nu").as_matrix();
  }
  if (pot.has("target")) {
    const auto target = pot.at("target");
    target.only({"kind", "params"});
    TargetSpec t;
    t.kind = target.at("kind").as_string();
    if (t.kind == "constant") {
      const auto tp = target.at("params");
      tp.only({"d"});
      t.d = tp.at("d").as_vector();
    } else if (t.kind == "tanh") {
      if (target.has("params")) {
        const auto tp = target.at("params");
        tp.only({"amplitude", "rate", "center", "dim"});
        t.tanh.amplitude = tp.number_or("amplitude", t.tanh.amplitude);
        t.tanh.rate = tp.number_or("rate", t.tanh.rate);
        t.tanh.center = tp.number_or("center", t.tanh.center);
        if (tp.has("dim")) t.tanh.dim = tp.at("dim").as_integer();
      }
    }
    s.potential.target = t;
  }

  const auto initial = root.at("initial");
  initial.only({"mean", "cov"});
  s.initial_mean = initial.at("mean").as_vector();
  s.initial_cov = initial.at("cov").as_matrix();

  const Eigen::Index m = s.initial_mean.size();
  if (root.has("control")) {
    const auto control = root.at("control");
    control.only({"B", "R"});
    s.b = control.at("B").as_matrix();
    s.r = control.at("R").as_matrix();
  } else {
    s.b = Matrix::Identity(m, m);
    s.r = Matrix::Identity(m, m);
  }
  if (root.has("horizon")) s.horizon = root.at("horizon").as_integer();
  if (root.has("seed")) {
    const std::int64_t seed = root.at("seed").as_integer();
    if (seed < 0) root.at("seed").fail("seed must be non-negative");
    s.seed = static_cast<std::uint64_t>(seed);
  }
  if (root.has("mode")) s.mode = parse_mode(root.at("mode").as_string());

  validate_scenario(s);
  return s;
}

inline Scenario parse_scenario_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError("scenario line " + std::to_string(detail::line_of(text, e.byte == 0 ? 0 : e.byte - 1)) + ": " +
                     e.what());
  }
  return scenario_from_json(j);
}

inline Scenario parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str());
}

/// Canonical form: every key written, defaults made explicit.
inline Json scenario_to_json(const Scenario& s) {
  Json drift_params = Json::object();
  if (s.drift.kind == "vanderpol_forced") {
    drift_params["coefficient"] = s.drift.vdp.coefficient;
    drift_params["forcing"] = s.drift.vdp.forcing;
    drift_params["frequency"] = s.drift.vdp.frequency;
  } else if (s.drift.kind == "linear") {
    drift_params["A"] = detail::matrix_json(s.drift.a);
  }

  Json pot_params = Json::object();
  if (s.potential.kind == "log_barrier") {
    pot_params["a"] = detail::vector_json(s.potential.a);
  } else {
    if (s.potential.kind == "observation") pot_params["C"] = detail::matrix_json(s.potential.c);
    pot_params["sigma_nu"] = detail::matrix_json(s.potential.sigma_nu);
  }
  Json pot{{"kind", s.potential.kind}, {"params", pot_params}};
  if (const auto& t = s.potential.target) {
    Json tp = Json::object();
    if (t->kind == "constant") {
      tp["d"] = detail::vector_json(t->d);
    } else {
      tp["amplitude"] = t->tanh.amplitude;
      tp["rate"] = t->tanh.rate;
      tp["center"] = t->tanh.center;
      tp["dim"] = t->tanh.dim;
    }
    pot["target"] = Json{{"kind", t->kind}, {"params", tp}};
  }

  return Json{{"name", s.name},
              {"process",
               {{"drift", {{"kind", s.drift.kind}, {"params", drift_params}}},
                {"g_inv", detail::matrix_json(s.g_inv)},
                {"dt", s.dt}}},
              {"potential", pot},
              {"initial", {{"mean", detail::vector_json(s.initial_mean)}, {"cov", detail::matrix_json(s.initial_cov)}}},
              {"control", {{"B", detail::matrix_json(s.b)}, {"R", detail::matrix_json(s.r)}}},
              {"horizon", s.horizon},
              {"seed", s.seed},
              {"mode", std::string(to_string(s.mode))}};
}

inline std::string write_scenario(const Scenario& s) { return scenario_to_json(s).dump(2) + "\n"; }

inline ItoProcessModel Scenario::process() const {
  const Eigen::Index m = state_dim();
  Drift d = drift.kind == "linear"             ? drift::linear(drift.a)
            : drift.kind == "vanderpol_forced" ? drift::vanderpol_forced(drift.vdp)
                                               : drift::zero(m);
  return ItoProcessModel(m, dt, std::move(d), SymMatrix(g_inv));
}

inline ControlScenario Scenario::control_scenario() const {
  Potential pot = [&] {
    const auto& p = potential;
    auto schedule = [&]() -> TargetSchedule {
      if (p.target->kind == "tanh") return tanh_schedule(p.target->tanh);
      return constant_target(p.target->d);
    };
    if (p.kind == "quadratic_penalty") {
      return Potential::quadratic_penalty(schedule(), spd_inverse(SymMatrix(p.sigma_nu), "sigma_nu"));
    }
    if (p.kind == "double_well") {
      return Potential::double_well(schedule(), spd_inverse(SymMatrix(p.sigma_nu), "sigma_nu"));
    }
    if (p.kind == "log_barrier") return Potential::log_barrier(p.a);
    throw ValidationError("potential kind '" + p.kind + "' cannot drive a simulation (use the filter command)");
  }();
  return ControlScenario{name,
                         process(),
                         std::move(pot),
                         GaussianBelief{initial_mean, SymMatrix(initial_cov), 0, BeliefTag::initial},
                         ControlConfig(b, SymMatrix(r)),
                         horizon,
                         mode,
                         seed};
}

inline ObservationModel Scenario::observation_model() const {
  if (potential.kind != "observation") {
    throw ValidationError("filter needs a potential of kind 'observation'");
  }
  return ObservationModel::linear(potential.c, SymMatrix(potential.sigma_nu));
}

}  // namespace sqc
