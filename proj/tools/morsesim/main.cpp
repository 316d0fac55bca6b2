#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "morse/dynamics.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw morsesim::ConfigError("config: cannot read file \"" + path + "\"");
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Output directory precedence: --out flag, then the config document, then
// the MORSESIM_OUT environment variable, then "./out".
void resolve_out(morsesim::RunConfig& cfg, const std::string& flag_out) {
  if (!flag_out.empty()) {
    cfg.out = flag_out;
    cfg.out_set = true;
    return;
  }
  if (cfg.out_set) return;
  if (const char* env = std::getenv("MORSESIM_OUT"); env != nullptr && *env != '\0') {
    cfg.out = env;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "morsesim: deterministic particle solver for the 1d nonlocal interaction equation\n"
      "with exponential repulsion, converging to the quadratic porous medium equation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_flag;
  std::size_t jobs = 1;
  std::uint64_t seed_flag = 0;

  auto* sim = app.add_subcommand("simulate", "run one particle simulation and check bounds");
  sim->add_option("--config", config_path, "JSON run configuration")->required();
  sim->add_option("--out", out_flag, "output directory (overrides config and MORSESIM_OUT)");
  auto* sim_seed = sim->add_option("--seed", seed_flag, "record this seed in the manifest");

  auto* conv = app.add_subcommand("converge-n", "mesh refinement at fixed epsilon");
  conv->add_option("--config", config_path, "JSON run configuration (needs n_list)")->required();
  conv->add_option("--out", out_flag, "output directory");
  conv->add_option("--jobs", jobs, "worker threads for independent runs");

  auto* joint = app.add_subcommand("joint-limit", "N -> inf with epsilon_N from a rule");
  joint->add_option("--config", config_path, "JSON run configuration (needs epsilon_rule, n_list)")
      ->required();
  joint->add_option("--out", out_flag, "output directory");
  joint->add_option("--jobs", jobs, "worker threads for independent runs");

  auto* verify = app.add_subcommand("verify", "randomized property suite");
  morsesim::VerifyOptions vopt;
  verify->add_option("--seed", vopt.seed, "RNG seed for the property suite");
  verify->add_option("--sizes", vopt.sizes, "particle counts for the velocity checks")
      ->delimiter(',');
  verify->add_option("--inject-fault", vopt.inject_fault,
                     "negative control; supported: w-prime-sign");
  verify->add_option("--out", vopt.out, "directory for verify.json");

  auto* echo = app.add_subcommand("config-echo", "parse a config and print its canonical form");
  echo->add_option("--config", config_path, "JSON run configuration")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (verify->parsed()) {
      if (vopt.out.empty()) {
        if (const char* env = std::getenv("MORSESIM_OUT"); env != nullptr && *env != '\0')
          vopt.out = env;
        else
          vopt.out = "out";
      }
      return morsesim::cmd_verify(vopt);
    }

    morsesim::RunConfig cfg = morsesim::parse_config(read_file(config_path));
    resolve_out(cfg, out_flag);
    if (sim_seed->count() > 0) cfg.seed = seed_flag;

    if (echo->parsed()) {
      std::cout << morsesim::serialize_config(cfg);
      return 0;
    }
    if (sim->parsed()) return morsesim::cmd_simulate(cfg);
    if (conv->parsed()) return morsesim::cmd_converge_n(cfg, jobs);
    if (joint->parsed()) return morsesim::cmd_joint_limit(cfg, jobs);
    std::cerr << "morsesim: no subcommand dispatched\n";
    return 1;
  } catch (const morsesim::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const morse::IntegrationError& e) {
    std::cerr << "integration failed: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
