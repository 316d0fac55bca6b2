#include "config.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "json.hpp"
#include "morse/reference.hpp"

namespace morsesim {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

void expect_keys(const json& j, const char* where, std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) fail(std::string(where) + ": unknown key \"" + item.key() + "\"");
  }
}

double get_double(const json& j, const char* where) {
  if (!j.is_number()) fail(std::string(where) + ": expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) fail(std::string(where) + ": must be finite");
  return v;
}

std::size_t get_size(const json& j, const char* where) {
  if (j.is_number_unsigned()) return j.get<std::size_t>();
  if (j.is_number_integer()) {
    auto v = j.get<long long>();
    if (v < 0) fail(std::string(where) + ": must be non-negative");
    return static_cast<std::size_t>(v);
  }
  if (j.is_number_float()) {
    double v = j.get<double>();
    if (std::isfinite(v) && v >= 0.0 && v == std::floor(v))
      return static_cast<std::size_t>(v);
  }
  fail(std::string(where) + ": expected a non-negative integer");
}

std::vector<double> get_double_array(const json& j, const char* where) {
  if (!j.is_array()) fail(std::string(where) + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(get_double(e, where));
  return out;
}

InitialSpec parse_initial(const json& j) {
  if (!j.is_object()) fail("initial: expected an object");
  InitialSpec spec;
  if (j.contains("preset")) {
    expect_keys(j, "initial", {"preset", "t0"});
    if (!j.at("preset").is_string()) fail("initial.preset: expected a string");
    const std::string name = j.at("preset").get<std::string>();
    if (name == "dirac") {
      spec.kind = InitialSpec::Kind::Dirac;
    } else if (name == "two_diracs") {
      spec.kind = InitialSpec::Kind::TwoDiracs;
    } else if (name == "uniform") {
      spec.kind = InitialSpec::Kind::Uniform;
    } else if (name == "barenblatt") {
      spec.kind = InitialSpec::Kind::Barenblatt;
    } else {
      fail("initial.preset: unknown preset \"" + name +
           "\" (expected dirac, two_diracs, uniform, or barenblatt)");
    }
    if (j.contains("t0")) {
      if (spec.kind != InitialSpec::Kind::Barenblatt)
        fail("initial.t0: only valid with the barenblatt preset");
      spec.t0 = get_double(j.at("t0"), "initial.t0");
      if (spec.t0 <= 0.0) fail("initial.t0: must be positive");
    }
    return spec;
  }

  expect_keys(j, "initial", {"density", "atoms"});
  if (!j.contains("density") && !j.contains("atoms"))
    fail("initial: expected \"preset\" or an explicit \"density\"/\"atoms\" measure");
  spec.kind = InitialSpec::Kind::Explicit;
  if (j.contains("density")) {
    const json& d = j.at("density");
    if (!d.is_object()) fail("initial.density: expected an object");
    expect_keys(d, "initial.density", {"breakpoints", "values"});
    if (!d.contains("breakpoints") || !d.contains("values"))
      fail("initial.density: requires \"breakpoints\" and \"values\"");
    auto bp = get_double_array(d.at("breakpoints"), "initial.density.breakpoints");
    auto vals = get_double_array(d.at("values"), "initial.density.values");
    try {
      spec.explicit_measure.density = morse::PiecewiseConstantDensity(std::move(bp), std::move(vals));
    } catch (const std::exception& e) {
      fail(std::string("initial.density: ") + e.what());
    }
  }
  if (j.contains("atoms")) {
    const json& a = j.at("atoms");
    if (!a.is_array()) fail("initial.atoms: expected an array");
    for (const auto& e : a) {
      if (!e.is_object()) fail("initial.atoms: expected objects with location/weight");
      expect_keys(e, "initial.atoms", {"location", "weight"});
      if (!e.contains("location") || !e.contains("weight"))
        fail("initial.atoms: each atom needs \"location\" and \"weight\"");
      morse::Atom atom;
      atom.position = get_double(e.at("location"), "initial.atoms.location");
      atom.weight = get_double(e.at("weight"), "initial.atoms.weight");
      spec.explicit_measure.atoms.push_back(atom);
    }
  }
  try {
    spec.explicit_measure.validate_probability();
  } catch (const std::exception& e) {
    fail(std::string("initial: ") + e.what());
  }
  return spec;
}

ordered_json initial_to_json(const InitialSpec& spec) {
  ordered_json j;
  switch (spec.kind) {
    case InitialSpec::Kind::Dirac:
      j["preset"] = "dirac";
      return j;
    case InitialSpec::Kind::TwoDiracs:
      j["preset"] = "two_diracs";
      return j;
    case InitialSpec::Kind::Uniform:
      j["preset"] = "uniform";
      return j;
    case InitialSpec::Kind::Barenblatt:
      j["preset"] = "barenblatt";
      j["t0"] = spec.t0;
      return j;
    case InitialSpec::Kind::Explicit:
      break;
  }
  if (spec.explicit_measure.density) {
    ordered_json d;
    d["breakpoints"] = spec.explicit_measure.density->breakpoints();
    d["values"] = spec.explicit_measure.density->values();
    j["density"] = std::move(d);
  }
  if (!spec.explicit_measure.atoms.empty()) {
    ordered_json arr = ordered_json::array();
    for (const auto& atom : spec.explicit_measure.atoms) {
      ordered_json e;
      e["location"] = atom.position;
      e["weight"] = atom.weight;
      arr.push_back(std::move(e));
    }
    j["atoms"] = std::move(arr);
  }
  return j;
}

}  // namespace

double EpsilonRule::epsilon_for(std::size_t n) const {
  return c * std::pow(static_cast<double>(n), -gamma);
}

morse::MeasureSpec InitialSpec::measure() const {
  morse::MeasureSpec m;
  switch (kind) {
    case Kind::Dirac:
      m.atoms.push_back({0.0, 1.0});
      return m;
    case Kind::TwoDiracs:
      m.atoms.push_back({-1.0, 0.5});
      m.atoms.push_back({1.0, 0.5});
      return m;
    case Kind::Uniform:
      m.density = morse::PiecewiseConstantDensity({-1.0, 1.0}, {0.5});
      return m;
    case Kind::Barenblatt:
      m.density = morse::barenblatt_cells(t0, 4096);
      return m;
    case Kind::Explicit:
      return explicit_measure;
  }
  throw ConfigError("config: corrupt initial spec");
}

std::string InitialSpec::label() const {
  switch (kind) {
    case Kind::Dirac:
      return "dirac";
    case Kind::TwoDiracs:
      return "two_diracs";
    case Kind::Uniform:
      return "uniform";
    case Kind::Barenblatt:
      return "barenblatt";
    case Kind::Explicit:
      return "explicit";
  }
  return "unknown";
}

double RunConfig::epsilon_for(std::size_t count) const {
  if (epsilon) return *epsilon;
  if (epsilon_rule) return epsilon_rule->epsilon_for(count);
  throw ConfigError("config: no epsilon or epsilon_rule set");
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("top level must be a JSON object");
  expect_keys(j, "top level",
              {"initial", "n", "epsilon", "epsilon_rule", "t_end", "snapshots", "tolerances",
               "eta", "n_list", "out", "seed"});

  RunConfig cfg;
  if (!j.contains("initial")) fail("missing required key \"initial\"");
  cfg.initial = parse_initial(j.at("initial"));

  if (j.contains("n")) {
    cfg.n = get_size(j.at("n"), "n");
    if (cfg.n < 2) fail("n: need at least two particles");
  }

  const bool has_eps = j.contains("epsilon");
  const bool has_rule = j.contains("epsilon_rule");
  if (has_eps == has_rule)
    fail("exactly one of \"epsilon\" and \"epsilon_rule\" must be given");
  if (has_eps) {
    double eps = get_double(j.at("epsilon"), "epsilon");
    if (eps <= 0.0) fail("epsilon: must be positive");
    cfg.epsilon = eps;
  } else {
    const json& r = j.at("epsilon_rule");
    if (!r.is_object()) fail("epsilon_rule: expected an object");
    expect_keys(r, "epsilon_rule", {"c", "gamma"});
    if (!r.contains("c") || !r.contains("gamma"))
      fail("epsilon_rule: requires \"c\" and \"gamma\"");
    EpsilonRule rule;
    rule.c = get_double(r.at("c"), "epsilon_rule.c");
    rule.gamma = get_double(r.at("gamma"), "epsilon_rule.gamma");
    if (rule.c <= 0.0) fail("epsilon_rule.c: must be positive");
    cfg.epsilon_rule = rule;
  }

  if (!j.contains("t_end")) fail("missing required key \"t_end\"");
  cfg.t_end = get_double(j.at("t_end"), "t_end");
  if (cfg.t_end <= 0.0) fail("t_end: must be positive");

  if (j.contains("snapshots")) {
    cfg.snapshots = get_size(j.at("snapshots"), "snapshots");
    if (cfg.snapshots < 1) fail("snapshots: need at least one");
  }

  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    if (!t.is_object()) fail("tolerances: expected an object");
    expect_keys(t, "tolerances", {"rel", "abs", "gap_slack", "dt_min"});
    if (t.contains("rel")) {
      cfg.tolerances.rel = get_double(t.at("rel"), "tolerances.rel");
      if (cfg.tolerances.rel <= 0.0) fail("tolerances.rel: must be positive");
    }
    if (t.contains("abs")) cfg.tolerances.abs = get_double(t.at("abs"), "tolerances.abs");
    if (t.contains("gap_slack")) {
      cfg.tolerances.gap_slack = get_double(t.at("gap_slack"), "tolerances.gap_slack");
      if (cfg.tolerances.gap_slack < 0.0 || cfg.tolerances.gap_slack >= 1.0)
        fail("tolerances.gap_slack: must lie in [0, 1)");
    }
    if (t.contains("dt_min")) {
      cfg.tolerances.dt_min = get_double(t.at("dt_min"), "tolerances.dt_min");
      if (cfg.tolerances.dt_min <= 0.0) fail("tolerances.dt_min: must be positive");
    }
  }

  if (j.contains("eta")) {
    cfg.eta = get_double(j.at("eta"), "eta");
    if (cfg.eta < 0.0) fail("eta: must be non-negative");
  }

  if (j.contains("n_list")) {
    const json& list = j.at("n_list");
    if (!list.is_array()) fail("n_list: expected an array");
    for (const auto& e : list) {
      std::size_t v = get_size(e, "n_list");
      if (v < 2) fail("n_list: entries need at least two particles");
      if (!cfg.n_list.empty() && v <= cfg.n_list.back())
        fail("n_list: entries must be strictly increasing");
      cfg.n_list.push_back(v);
    }
  }

  if (j.contains("out")) {
    if (!j.at("out").is_string()) fail("out: expected a string");
    cfg.out = j.at("out").get<std::string>();
    if (cfg.out.empty()) fail("out: must be non-empty");
    cfg.out_set = true;
  }

  if (j.contains("seed")) cfg.seed = get_size(j.at("seed"), "seed");

  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  ordered_json j;
  j["initial"] = initial_to_json(cfg.initial);
  if (cfg.n > 0) j["n"] = cfg.n;
  if (cfg.epsilon) {
    j["epsilon"] = *cfg.epsilon;
  } else if (cfg.epsilon_rule) {
    ordered_json r;
    r["c"] = cfg.epsilon_rule->c;
    r["gamma"] = cfg.epsilon_rule->gamma;
    j["epsilon_rule"] = std::move(r);
  }
  j["t_end"] = cfg.t_end;
  j["snapshots"] = cfg.snapshots;
  ordered_json tol;
  tol["rel"] = cfg.tolerances.rel;
  tol["abs"] = cfg.tolerances.abs;
  tol["gap_slack"] = cfg.tolerances.gap_slack;
  tol["dt_min"] = cfg.tolerances.dt_min;
  j["tolerances"] = std::move(tol);
  j["eta"] = cfg.eta;
  if (!cfg.n_list.empty()) j["n_list"] = cfg.n_list;
  j["out"] = cfg.out;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

}  // namespace morsesim
