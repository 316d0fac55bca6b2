#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "morse/dynamics.hpp"
#include "morse/transport1d.hpp"

namespace morsesim {

// Raised for malformed or inconsistent run configurations.  The CLI maps
// this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Interaction range as a function of particle count: epsilon(N) = c * N^-gamma.
struct EpsilonRule {
  double c = 1.0;
  double gamma = 0.25;

  double epsilon_for(std::size_t n) const;
};

// Initial probability measure, either a named preset or an explicit
// piecewise-constant density plus point masses.
struct InitialSpec {
  enum class Kind { Dirac, TwoDiracs, Uniform, Barenblatt, Explicit };

  Kind kind = Kind::Uniform;
  double t0 = 1.0;  // Barenblatt release time (Barenblatt preset only).
  morse::MeasureSpec explicit_measure;

  // Materialize the measure this spec describes.
  morse::MeasureSpec measure() const;
  std::string label() const;
};

// A full run description.  Exactly one of `epsilon` / `epsilon_rule` must be
// set; `n` is required by `simulate`, while the sweep commands read `n_list`.
struct RunConfig {
  InitialSpec initial;
  std::size_t n = 0;  // 0 = unset
  std::optional<double> epsilon;
  std::optional<EpsilonRule> epsilon_rule;
  double t_end = 0.0;
  std::size_t snapshots = 100;
  morse::Tolerances tolerances;
  double eta = 0.0;  // detachment spacing; 0 = automatic
  std::vector<std::size_t> n_list;
  std::string out = "out";
  bool out_set = false;  // true when the JSON document named an output dir
  std::uint64_t seed = 0;

  // Resolve the interaction range for a given particle count.
  double epsilon_for(std::size_t count) const;
};

// Parse a JSON document into a validated RunConfig.  Unknown keys and
// violated invariants raise ConfigError.
RunConfig parse_config(const std::string& text);

// Canonical JSON form.  serialize_config(parse_config(text)) is a fixpoint:
// parsing it back and serializing again reproduces the same bytes.
std::string serialize_config(const RunConfig& cfg);

}  // namespace morsesim
