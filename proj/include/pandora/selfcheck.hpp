// Built-in invariant suite behind the CLI `verify` subcommand: round trip,
// zero-weight dissolution, top-k oracle equivalence, and guidance
// identities, all self-contained and seedable.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pandora {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CheckResult> run_selfchecks(std::uint64_t seed);

}  // namespace pandora
