// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dawnplan/balance.hpp"
#include "dawnplan/graph.hpp"

namespace dawnplan {

struct SwapCandidate {
  TensorRef tensor;
  Micros out_time = 0;
  Micros in_time = 0;
  // Slack between forward completion and backward access minus the round
  // trip. Negative means the transfer cannot fully hide.
  Micros free_time = 0;
  Micros overhead_if_chosen() const { return free_time < 0 ? -free_time : 0; }
};

struct RecomputeCandidate {
  TensorRef tensor;
  Micros recompute_time = 0;
  std::vector<int> chain;   // nodes re-executed, canonical indices ascending
  std::vector<int> inputs;  // retained producers the chain reads from
  double msps = 0;          // bytes saved per second of recomputation
};

struct StageCandidates {
  std::vector<SwapCandidate> swaps;
  std::vector<RecomputeCandidate> recomputes;
};

// Stage-local timeline: forwards of [lo, hi] in order, then backwards in
// reverse order.
struct StageTimeline {
  Range range;
  std::vector<Micros> fwd_done;    // indexed by (node - lo)
  std::vector<Micros> bwd_start;   // indexed by (node - lo)
  Micros compute = 0;              // sum of t_f + t_b
};

StageTimeline build_timeline(const ComputationGraph& g, Range r);

Micros free_time(Micros fwd_done, Micros bwd_access, Micros out_time, Micros in_time);

StageCandidates collect_candidates(const ComputationGraph& g, const StageTimeline& tl,
                                   std::int64_t bandwidth_bps);

struct MemOptAction {
  enum class Kind { kSwap, kRecompute };
  Kind kind = Kind::kSwap;
  std::string tensor;
  Bytes size = 0;
  // Time this action adds to the stage.
  Micros overhead = 0;
  // Swaps only: free time after charging the part of the transfer that no
  // longer fits under the stage's compute window.
  Micros free_time = 0;
};

struct MemOptPlan {
  std::vector<MemOptAction> actions;
  Bytes bytes_saved = 0;      // sum of action sizes
  Bytes effective_saved = 0;  // drop of the per-micro-batch peak
  Micros added_time = 0;      // T^moo
};

struct MemOptRequest {
  Range range;
  Bytes micro_peak = 0;
  std::int64_t replica_weight = 1;
  Bytes capacity = 0;
  std::int64_t bandwidth_bps = 0;
};

// Greedy FreeTime/MSPS optimization. The greedy removal order is fixed
// first; the result is the cheapest plan among its prefixes and their small
// neighbourhoods that fits, so more capacity never costs more time.
// Returns nullopt when nothing brings replica_weight * peak under capacity.
std::optional<MemOptPlan> optimize(const ComputationGraph& g, const MemOptRequest& req);

// Exhaustive reference over every subset of candidate actions (swap,
// recompute or nothing per tensor). Only for stages with <= 12 tensors.
std::optional<MemOptPlan> optimize_exhaustive(const ComputationGraph& g,
                                              const MemOptRequest& req);

// Peak of the stage after the listed tensors stop occupying memory from
// their producer onwards.
Bytes peak_after_removal(const ComputationGraph& g, Range r,
                         const std::vector<TensorRef>& removed);

}  // namespace dawnplan
