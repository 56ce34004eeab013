// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dawnplan/graph.hpp"
#include "dawnplan/partitioner.hpp"

namespace dawnplan {

inline constexpr std::int64_t kOracleTupleLimit = 10'000'000;

struct OracleOptions {
  // Use the exhaustive memopt search on stages with at most 12 tensors.
  bool exhaustive_memopt = false;
};

// C(n, k), saturating at INT64_MAX.
std::int64_t binomial(int n, int k);

// Brute force over every increasing tuple of l-1 cut positions. Ties go to
// the lexicographically smallest tuple. Throws InstanceTooLargeError above
// kOracleTupleLimit tuples and InfeasibleError when nothing fits.
PartitionPlan exhaustive_plan(const ComputationGraph& g, const PlanConfig& cfg,
                              const OracleOptions& opts = {});

struct TheoremVerification {
  BalancedPair pair;          // two-stage split of the whole graph
  int optimal_cut = -1;       // lexicographically smallest optimum
  std::vector<int> optimal_cuts;  // every cut reaching the optimum
  Micros optimal_bottleneck = 0;
  bool inside = false;        // some optimal cut lies in [pair.lo(), pair.hi()]
  TheoremConditionReport conditions;

  // Containment is only claimed when every premise holds.
  bool holds() const { return inside || !conditions.all(); }
};

// Two-stage view of `g` (cfg.stages is ignored and treated as 2).
TheoremVerification verify_theorem(const ComputationGraph& g, const PlanConfig& cfg,
                                   const ConditionOptions& copts = {});

nlohmann::json verification_to_json(const TheoremVerification& v);

}  // namespace dawnplan
