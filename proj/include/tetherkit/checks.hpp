#pragma once

// Randomized property suites behind `tetherkit check`.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tetherkit/types.hpp"

namespace tetherkit::checks {

struct CheckResult {
  std::string name;
  int samples = 0;
  double worst = 0.0;      // largest observed error
  double tolerance = 0.0;
  bool passed() const { return worst <= tolerance; }
};

struct SuiteReport {
  std::string suite;
  std::vector<CheckResult> checks;
  bool passed() const;
};

/// Round trip, zero element, unit norm and tangency of the S^2 / TS^2 operators.
SuiteReport manifold_suite(std::uint64_t seed = 1, int samples = 10000);
/// Analytic derivative matrices and filter Jacobians against central differences.
SuiteReport jacobian_suite(std::uint64_t seed = 1, int samples = 100);
/// Energy conservation, mass-matrix solve residual and hover equilibrium.
SuiteReport energy_suite(std::uint64_t seed = 1, int samples = 1000);

/// Fourth-order central differences, column by column.
MatX central_difference(const std::function<VecX(const VecX&)>& f, const VecX& x,
                        double h = 1e-4);

}  // namespace tetherkit::checks
