#pragma once

#include <string>
#include <vector>

namespace acflow {

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Derivation-identity suite shared by the `verify` subcommand and the
/// acceptance tests:
///  - frame-evolution residual decays at O(dt) + O(h^2) under refinement
///  - mass_potential_forces match central finite differences
///    (rel err < 1e-4 on 100 random instances)
///  - min U_mass over rho at fixed mass equals (g/2) M^2 within 1e-6
///  - mu = rho ||C_p|| round-trip within 1e-12
std::vector<VerifyCheck> run_verify_suite(std::uint64_t seed = 0);

}  // namespace acflow
