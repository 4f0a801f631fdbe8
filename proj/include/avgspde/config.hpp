#pragma once

// JSON experiment configuration (schema_version 1).
//
// Per-mode coefficient arrays accept a scalar (broadcast to every mode) or an
// array of exactly `modes` numbers. Unknown keys are rejected. serialize()
// emits the canonical form: every key present, every array expanded.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "avgspde/averaging.hpp"
#include "avgspde/errors.hpp"
#include "avgspde/integrators.hpp"
#include "avgspde/models.hpp"

namespace avgspde {

enum class WeakMode { MonteCarlo, Gaussian };

struct TestFunctionSpec {
  TestFamily family = TestFamily::Cosine;
  std::vector<double> v;  ///< direction (cosine family)

  bool operator==(const TestFunctionSpec&) const = default;
};

struct DiagnosticsSpec {
  std::vector<double> t_grid;  ///< observation times for mixing curves
  std::size_t paths = 10000;
  double h = 0.01;

  bool operator==(const DiagnosticsSpec&) const = default;
};

struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  ModelSpec model;
  SimParams sim;
  std::vector<double> eps_grid;
  WeakMode mode = WeakMode::Gaussian;
  TestFunctionSpec phi;
  std::vector<double> x0;
  std::vector<double> y0;
  ErgodicParams ergodic{0.0, 0.0, 0.01, 8};  ///< zero times select the beta-based defaults
  DiagnosticsSpec diagnostics;
  std::string output;

  SpectralField initial_x() const { return SpectralField(x0, model.length); }
  SpectralField initial_y() const { return SpectralField(y0, model.length); }

  TestFunction test_function() const
  {
    if (phi.family == TestFamily::Rational) return TestFunction::rational();
    return TestFunction::cosine(SpectralField(phi.v, model.length));
  }

  ErgodicParams ergodic_params(double beta) const
  {
    ErgodicParams d = ErgodicParams::defaults(beta);
    if (ergodic.t_burn > 0.0) d.t_burn = ergodic.t_burn;
    if (ergodic.t_avg > 0.0) d.t_avg = ergodic.t_avg;
    if (ergodic.h > 0.0) d.h = ergodic.h;
    if (ergodic.replicas > 0) d.replicas = ergodic.replicas;
    return d;
  }

  bool operator==(const ExperimentConfig& o) const
  {
    return model == o.model && sim.epsilon == o.sim.epsilon && sim.T == o.sim.T &&
           sim.h_macro == o.sim.h_macro && sim.h_coupled == o.sim.h_coupled &&
           sim.samples == o.sim.samples && sim.seed == o.sim.seed && eps_grid == o.eps_grid &&
           mode == o.mode && phi == o.phi && x0 == o.x0 && y0 == o.y0 &&
           ergodic.t_burn == o.ergodic.t_burn && ergodic.t_avg == o.ergodic.t_avg &&
           ergodic.h == o.ergodic.h && ergodic.replicas == o.ergodic.replicas &&
           diagnostics == o.diagnostics && output == o.output;
  }
};

namespace detail {

using nlohmann::json;

class Reader {
public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path))
  {
    if (!j_.is_object()) fail("expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const
  {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!ok.count(it.key())) throw ConfigError("unknown key '" + field(it.key()) + "'");
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader object(const char* key) const
  {
    require(key);
    return Reader(j_.at(key), field(key));
  }

  double number(const char* key) const
  {
    require(key);
    const json& v = j_.at(key);
    if (!v.is_number()) fail_field(key, "expected a number");
    return v.get<double>();
  }

  double number_or(const char* key, double fallback) const
  {
    return has(key) ? number(key) : fallback;
  }

  std::uint64_t unsigned_integer(const char* key) const
  {
    require(key);
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      fail_field(key, "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }

  std::uint64_t unsigned_or(const char* key, std::uint64_t fallback) const
  {
    return has(key) ? unsigned_integer(key) : fallback;
  }

  std::string string(const char* key) const
  {
    require(key);
    const json& v = j_.at(key);
    if (!v.is_string()) fail_field(key, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* key) const
  {
    require(key);
    const json& v = j_.at(key);
    if (!v.is_array()) fail_field(key, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw ConfigError("field '" + field(key) + "[" + std::to_string(i) + "]': expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  /// Scalar broadcast to n entries, or an array of exactly n numbers.
  std::vector<double> per_mode(const char* key, std::size_t n) const
  {
    require(key);
    const json& v = j_.at(key);
    if (v.is_number()) return std::vector<double>(n, v.get<double>());
    std::vector<double> out = numbers(key);
    if (out.size() != n)
      fail_field(key, "expected a number or an array of " + std::to_string(n) + " numbers, got " +
                          std::to_string(out.size()));
    return out;
  }

  std::vector<double> per_mode_or(const char* key, std::size_t n, double fallback) const
  {
    return has(key) ? per_mode(key, n) : std::vector<double>(n, fallback);
  }

  [[noreturn]] void fail(const std::string& what) const
  {
    throw ConfigError("field '" + (path_.empty() ? std::string("<root>") : path_) + "': " + what);
  }

  [[noreturn]] void fail_field(const char* key, const std::string& what) const
  {
    throw ConfigError("field '" + field(key) + "': " + what);
  }

private:
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void require(const char* key) const
  {
    if (!j_.contains(key)) throw ConfigError("missing field '" + field(key) + "'");
  }

  const json& j_;
  std::string path_;
};

inline CovarianceSpec read_covariance(const Reader& r)
{
  r.allow({"rule", "c", "p"});
  const std::string rule = r.string("rule");
  if (rule == "constant") return CovarianceSpec::constant(r.number("c"));
  if (rule == "power") return CovarianceSpec::power(r.number("c"), r.number("p"));
  r.fail_field("rule", "expected \"constant\" or \"power\"");
}

inline ScalarMap read_scalar_map(const Reader& r)
{
  r.allow({"k0", "ku", "kv", "sin_amp", "sin_wu", "sin_wv", "sin_phase", "tanh_amp", "tanh_tu",
           "tanh_tv"});
  ScalarMap s;
  s.k0 = r.number_or("k0", 0.0);
  s.ku = r.number_or("ku", 0.0);
  s.kv = r.number_or("kv", 0.0);
  s.sin_amp = r.number_or("sin_amp", 0.0);
  s.sin_wu = r.number_or("sin_wu", 0.0);
  s.sin_wv = r.number_or("sin_wv", 0.0);
  s.sin_phase = r.number_or("sin_phase", 0.0);
  s.tanh_amp = r.number_or("tanh_amp", 0.0);
  s.tanh_tu = r.number_or("tanh_tu", 0.0);
  s.tanh_tv = r.number_or("tanh_tv", 0.0);
  return s;
}

inline json write_scalar_map(const ScalarMap& s)
{
  return json{{"k0", s.k0},           {"ku", s.ku},         {"kv", s.kv},
              {"sin_amp", s.sin_amp}, {"sin_wu", s.sin_wu}, {"sin_wv", s.sin_wv},
              {"sin_phase", s.sin_phase}, {"tanh_amp", s.tanh_amp}, {"tanh_tu", s.tanh_tu},
              {"tanh_tv", s.tanh_tv}};
}

inline json write_covariance(const CovarianceSpec& q)
{
  if (q.rule == CovarianceRule::Constant) return json{{"rule", "constant"}, {"c", q.c}, {"p", 0.0}};
  return json{{"rule", "power"}, {"c", q.c}, {"p", q.p}};
}

}  // namespace detail

/// Parse and validate; every failure is a ConfigError naming the field.
inline ExperimentConfig parse_config(const nlohmann::json& j)
{
  using detail::Reader;
  Reader root(j, "");
  root.allow({"schema_version", "model", "sim", "eps_grid", "mode", "phi", "x0", "y0", "ergodic",
              "diagnostics", "output"});
  if (root.has("schema_version") && root.unsigned_integer("schema_version") != 1)
    root.fail_field("schema_version", "unsupported schema version (expected 1)");

  ExperimentConfig c;
  const Reader m = root.object("model");
  m.allow({"length", "modes", "drift", "q1", "q2", "sigma1", "sigma2"});
  c.model.length = m.number("length");
  if (!(c.model.length > 0.0)) m.fail_field("length", "must be positive");
  c.model.modes = m.unsigned_integer("modes");
  if (c.model.modes == 0) m.fail_field("modes", "must be >= 1");
  const std::size_t n = c.model.modes;

  const Reader d = m.object("drift");
  const std::string family = d.string("family");
  if (family == "linear") {
    d.allow({"family", "a", "b", "f0", "g", "c", "g0"});
    LinearDrift lin;
    lin.a = d.per_mode_or("a", n, 0.0);
    lin.b = d.per_mode_or("b", n, 0.0);
    lin.f0 = d.per_mode_or("f0", n, 0.0);
    lin.g = d.per_mode_or("g", n, 0.0);
    lin.c = d.per_mode_or("c", n, 0.0);
    lin.g0 = d.per_mode_or("g0", n, 0.0);
    c.model.drift = std::move(lin);
  } else if (family == "nemytskii") {
    d.allow({"family", "f", "g", "grid_size"});
    NemytskiiDrift nem;
    nem.f = detail::read_scalar_map(d.object("f"));
    nem.g = detail::read_scalar_map(d.object("g"));
    nem.grid_size = d.unsigned_or("grid_size", 0);
    c.model.drift = nem;
  } else {
    d.fail_field("family", "expected \"linear\" or \"nemytskii\"");
  }
  c.model.q1 = detail::read_covariance(m.object("q1"));
  c.model.q2 = detail::read_covariance(m.object("q2"));
  c.model.sigma1 = m.number("sigma1");
  c.model.sigma2 = m.number("sigma2");

  const Reader s = root.object("sim");
  s.allow({"epsilon", "T", "h_macro", "h_coupled", "samples", "seed"});
  c.sim.epsilon = s.number_or("epsilon", 0.125);
  c.sim.T = s.number("T");
  c.sim.h_macro = s.number_or("h_macro", 0.01);
  c.sim.h_coupled = s.number_or("h_coupled", 0.0);
  c.sim.samples = s.unsigned_or("samples", 1000);
  c.sim.seed = s.unsigned_or("seed", 1);
  try {
    c.sim.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("field 'sim': ") + e.what());
  }

  c.eps_grid = root.numbers("eps_grid");
  if (c.eps_grid.empty()) root.fail_field("eps_grid", "must not be empty");
  for (std::size_t i = 0; i < c.eps_grid.size(); ++i) {
    if (!(c.eps_grid[i] > 0.0 && c.eps_grid[i] <= 1.0))
      root.fail_field("eps_grid", "entries must lie in (0, 1]");
    if (i > 0 && !(c.eps_grid[i] < c.eps_grid[i - 1]))
      root.fail_field("eps_grid", "must be strictly decreasing");
  }

  const std::string mode = root.has("mode") ? root.string("mode") : "gaussian";
  if (mode == "gaussian") c.mode = WeakMode::Gaussian;
  else if (mode == "mc") c.mode = WeakMode::MonteCarlo;
  else root.fail_field("mode", "expected \"mc\" or \"gaussian\"");

  const Reader p = root.object("phi");
  const std::string pf = p.string("family");
  if (pf == "cosine") {
    p.allow({"family", "v"});
    c.phi.family = TestFamily::Cosine;
    c.phi.v = p.per_mode("v", n);
  } else if (pf == "rational") {
    p.allow({"family"});
    c.phi.family = TestFamily::Rational;
  } else {
    p.fail_field("family", "expected \"cosine\" or \"rational\"");
  }

  c.x0 = root.per_mode_or("x0", n, 0.0);
  c.y0 = root.per_mode_or("y0", n, 0.0);

  if (root.has("ergodic")) {
    const Reader e = root.object("ergodic");
    e.allow({"t_burn", "t_avg", "h", "replicas"});
    c.ergodic.t_burn = e.number_or("t_burn", 0.0);
    c.ergodic.t_avg = e.number_or("t_avg", 0.0);
    c.ergodic.h = e.number_or("h", 0.01);
    c.ergodic.replicas = e.unsigned_or("replicas", 8);
  }

  if (root.has("diagnostics")) {
    const Reader g = root.object("diagnostics");
    g.allow({"t_grid", "paths", "h"});
    if (g.has("t_grid")) c.diagnostics.t_grid = g.numbers("t_grid");
    c.diagnostics.paths = g.unsigned_or("paths", 10000);
    c.diagnostics.h = g.number_or("h", 0.01);
  }
  if (c.diagnostics.t_grid.empty())
    for (int i = 0; i <= 40; ++i) c.diagnostics.t_grid.push_back(0.1 * i);

  c.output = root.has("output") ? root.string("output") : "";

  if (c.mode == WeakMode::Gaussian) {
    if (!c.model.is_linear()) root.fail_field("mode", "gaussian mode requires the linear drift family");
    if (c.phi.family != TestFamily::Cosine)
      root.fail_field("mode", "gaussian mode requires the cosine test function");
  }

  const ValidationReport report = validate_hypotheses(c.model, n);
  if (!report.ok()) throw ConfigError("model fails hypothesis validation: " + report.failures());
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Canonical JSON form.
inline nlohmann::json serialize(const ExperimentConfig& c)
{
  using nlohmann::json;
  json drift;
  if (const auto* lin = std::get_if<LinearDrift>(&c.model.drift)) {
    drift = json{{"family", "linear"}, {"a", lin->a}, {"b", lin->b}, {"f0", lin->f0},
                 {"g", lin->g},        {"c", lin->c}, {"g0", lin->g0}};
  } else {
    const auto& nem = std::get<NemytskiiDrift>(c.model.drift);
    drift = json{{"family", "nemytskii"},
                 {"f", detail::write_scalar_map(nem.f)},
                 {"g", detail::write_scalar_map(nem.g)},
                 {"grid_size", nem.grid_size}};
  }
  json phi = c.phi.family == TestFamily::Cosine ? json{{"family", "cosine"}, {"v", c.phi.v}}
                                                : json{{"family", "rational"}};
  return json{
      {"schema_version", ExperimentConfig::kSchemaVersion},
      {"model",
       {{"length", c.model.length},
        {"modes", c.model.modes},
        {"drift", drift},
        {"q1", detail::write_covariance(c.model.q1)},
        {"q2", detail::write_covariance(c.model.q2)},
        {"sigma1", c.model.sigma1},
        {"sigma2", c.model.sigma2}}},
      {"sim",
       {{"epsilon", c.sim.epsilon},
        {"T", c.sim.T},
        {"h_macro", c.sim.h_macro},
        {"h_coupled", c.sim.h_coupled},
        {"samples", c.sim.samples},
        {"seed", c.sim.seed}}},
      {"eps_grid", c.eps_grid},
      {"mode", c.mode == WeakMode::Gaussian ? "gaussian" : "mc"},
      {"phi", phi},
      {"x0", c.x0},
      {"y0", c.y0},
      {"ergodic",
       {{"t_burn", c.ergodic.t_burn},
        {"t_avg", c.ergodic.t_avg},
        {"h", c.ergodic.h},
        {"replicas", c.ergodic.replicas}}},
      {"diagnostics",
       {{"t_grid", c.diagnostics.t_grid}, {"paths", c.diagnostics.paths}, {"h", c.diagnostics.h}}},
      {"output", c.output}};
}

}  // namespace avgspde
