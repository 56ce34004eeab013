// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dawnplan/balance.hpp"
#include "dawnplan/graph.hpp"
#include "dawnplan/memopt.hpp"

namespace dawnplan {

struct PlanConfig {
  int stages = 2;
  Schedule schedule = Schedule::kAsync1F1B;
  Bytes capacity = 0;
  std::int64_t bandwidth_bps = 0;
  double comm_cap = 0.5;
  // 0 picks the default: l for synchronous, 4l for 1F1B.
  int micro_batches = 0;
  // Worker threads for candidate evaluation. Never changes the result.
  int jobs = 1;

  int effective_micro_batches() const;
};

struct StagePlan {
  Range range;
  StageMemProfile profile;
  MemOptPlan memopt;
  Micros total_time() const { return profile.time + memopt.added_time; }
  // Scheduled peak once memopt savings apply.
  Bytes post_sched_peak(const PlanConfig& cfg) const;
};

struct PartitionPlan {
  std::string graph_name;
  std::string graph_hash;
  PlanConfig config;
  Cut cuts;
  std::vector<StagePlan> stages;
  Micros bottleneck = 0;

  // max_x (T_x + T_x^moo), recomputed from the stage list.
  Micros recompute_bottleneck() const;
};

struct CandidateCut {
  int position = 0;
  Bytes comm_bytes = 0;  // excludes inevitable communication
  Micros est_comm_time = 0;
  // Original position when the common-consumer adjustment moved the cut.
  int shifted_from = -1;
};

struct Edge {
  int from = 0;
  int to = 0;
  friend bool operator<(const Edge& a, const Edge& b) {
    return std::tie(a.from, a.to) < std::tie(b.from, b.to);
  }
  friend bool operator==(const Edge& a, const Edge& b) {
    return a.from == b.from && a.to == b.to;
  }
};

// Edges severed by every cut position in [lo, hi].
std::vector<Edge> inevitable_comm(const ComputationGraph& g, int lo, int hi);

// Producers whose activation crosses `cut`, excluding those flagged in
// `inevitable` (indexed by node).
std::vector<int> crossing_producers(const ComputationGraph& g, int cut,
                                    const std::vector<char>& inevitable);

struct SortContext {
  Range range;          // the segment being split
  int left_span = 1;    // pipeline stages the left side will hold
  int right_span = 1;
  std::int64_t bandwidth_bps = 0;
  double comm_cap = 0.5;
};

// Candidate cuts in the closed interval between the balanced positions that
// pass the comm filter, ordered from the memory-balanced end toward the
// compute-balanced end. A position that fails the filter is replaced by the
// cut after the single node all its crossing activations feed, when that
// node lies in the interval and the shifted cut passes. May be empty.
std::vector<CandidateCut> identify_and_sort(const ComputationGraph& g, BalancedPair pair,
                                            const SortContext& ctx);

// Result of partitioning a segment into a contiguous run of stages.
struct SubPlan {
  bool feasible = false;
  Micros min_t = 0;
  std::vector<int> cuts;
  std::vector<MemOptPlan> memopt;  // one per stage in the run
};

// One search level, recorded for inspection and tests.
struct SearchLevel {
  Range range;
  int first_stage = 0;
  int last_stage = 0;
  BalancedPair pair;
  int chosen = -1;  // -1 when infeasible
};

class Partitioner {
 public:
  Partitioner(const ComputationGraph& g, PlanConfig cfg);

  // Stage x (1-based) holding `r`, with memopt if needed. nullopt if no
  // memopt plan fits.
  std::optional<MemOptPlan> evaluate_stage(Range r, int stage);

  SubPlan adjacent_partition(Range r, int sid);
  SubPlan bipar(Range r, int first, int last);
  PartitionPlan plan();

  std::vector<SearchLevel> trace() const;

  const ComputationGraph& graph() const { return g_; }
  const PlanConfig& config() const { return cfg_; }

 private:
  using Key = std::tuple<int, int, int, int>;
  std::vector<CandidateCut> candidates(Range r, BalancedPair pair, int left_span,
                                       int right_span);
  SubPlan split(Range r, int first, int last, int left_span);
  void record(const SearchLevel& lvl);

  const ComputationGraph& g_;
  PlanConfig cfg_;
  mutable std::mutex mu_;
  std::map<Key, SubPlan> memo_;
  std::map<std::tuple<int, int, int>, std::optional<MemOptPlan>> stage_memo_;
  std::vector<SearchLevel> trace_;
};

SubPlan adjacent_partition(const ComputationGraph& g, Range r, int sid,
                           const PlanConfig& cfg);
SubPlan bipar(const ComputationGraph& g, Range r, int first, int last,
              const PlanConfig& cfg);

// Throws InfeasibleError naming the most oversubscribed stage.
PartitionPlan plan(const ComputationGraph& g, const PlanConfig& cfg);

// Builds a plan for fixed cuts, running memopt per stage. Stages that cannot
// fit keep an empty memopt plan; `feasible` reports whether all fit.
PartitionPlan assemble_plan(const ComputationGraph& g, const PlanConfig& cfg,
                            const Cut& cuts, bool* feasible = nullptr);

// Plan with the given per-stage memopt plans (no optimization performed).
PartitionPlan assemble_plan(const ComputationGraph& g, const PlanConfig& cfg,
                            const Cut& cuts, const std::vector<MemOptPlan>& memopt);

// ---- plan files ------------------------------------------------------------

nlohmann::json plan_to_json(const PartitionPlan& p);
PartitionPlan plan_from_json(const nlohmann::json& j);

std::vector<Range> stage_ranges(const Cut& cuts, int nodes);

}  // namespace dawnplan
