#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"

namespace morsesim {

struct VerifyOptions {
  std::uint64_t seed = 20260823;
  std::vector<std::size_t> sizes;  // empty = default ladder
  std::string inject_fault;        // "" or "w-prime-sign"
  std::string out = "out";
};

// Atomize, integrate, and check every tracked bound; writes trajectory,
// density, bound-report and summary artifacts under cfg.out.
// Returns 0 when all bounds pass, 4 otherwise.
int cmd_simulate(const RunConfig& cfg);

// Fixed-epsilon mesh refinement over a doubling n_list: runs every N plus
// 2*max(N), tabulates the quantile-metric distance between consecutive
// resolutions, and asserts it strictly decreases.  Returns 0/4.
int cmd_converge_n(const RunConfig& cfg, std::size_t jobs);

// Joint limit N -> inf with epsilon_N from the configured rule: refuses
// rules along which 1/(N epsilon_N^3) grows, then tabulates errors against
// the exact self-similar profile and a finite-difference reference.
int cmd_joint_limit(const RunConfig& cfg, std::size_t jobs);

// Randomized property suite (dual velocity routes, kernel identities,
// scan-vs-direct convolutions, gap/entropy bounds, weak residual).  The
// fault injection hook flips one sign in the direct velocity route and must
// make the suite fail.  Returns 0 when every check passes, 4 otherwise.
int cmd_verify(const VerifyOptions& opt);

}  // namespace morsesim
