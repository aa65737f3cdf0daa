#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lpf::checks {

// Invariant and oracle checks behind the CLI's `check` verb. Each one compares
// the library against an independently coded reference (finite differences,
// brute-force scans) rather than against itself.

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline constexpr double kFiniteDifferenceStep = 1e-5;
inline constexpr double kGradientTolerance = 1e-4;

/// Analytic vs central-difference gradients of each loss term and the weighted
/// total on a d=4, hidden=6, C=3, batch=5 model.
CheckResult gradient_oracle(std::uint64_t seed);

/// Every loss is zero (or ln C for uniform entropy) at its documented optimum.
CheckResult loss_fixed_points();

/// map_at_r against a brute-force AP average over 20 queries x 100 items, and
/// the (1,0,1) hand case.
CheckResult map_oracle(std::uint64_t seed);

/// tau-monotonicity, post-hoc re-verification and label agreement of the
/// selection rule over at least `samples` random unlabeled pairs.
CheckResult selection_properties(std::uint64_t seed, std::size_t samples = 1200);

std::vector<CheckResult> run_all(std::uint64_t seed);

}  // namespace lpf::checks
