// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dawnplan/graph.hpp"

namespace dawnplan {

enum class Schedule { kSync, kAsync1F1B };

std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

// Cut positions in canonical order. A position p puts nodes [.., p] on the
// left and [p+1, ..] on the right.
struct Cut {
  std::vector<int> positions;
};

// Inclusive canonical index interval.
struct Range {
  int lo = 0;
  int hi = -1;
  int size() const { return hi - lo + 1; }
};

// How many micro-batches' worth of stage memory is resident at once.
// 1F1B: l - x + 1 for 1-based stage x. Synchronous: every micro-batch.
std::int64_t replica_weight(Schedule s, int stage, int stages, int micro_batches);

struct StageMemProfile {
  int stage = 0;           // 1-based
  Bytes micro_peak = 0;    // per-micro-batch peak of the stage subgraph
  Bytes sched_peak = 0;    // replica_weight * micro_peak
  Micros time = 0;         // sum of t_f + t_b
};

StageMemProfile stage_profile(const ComputationGraph& g, Range r, int stage,
                              Schedule s, int stages, int micro_batches);

// Exact min-max over all cut tuples of max_k(part_time_k / weight_k).
// Among optimal tuples returns the lexicographically smallest.
Cut compute_balanced(const ComputationGraph& g, Range r,
                     const std::vector<std::int64_t>& weights);

// Memory-balanced partition for 1F1B: stage targets satisfy
// l*M_1 = ... = (l-x+1)*M_x, each stage cut at the first node whose running
// peak reaches its target.
Cut memory_balanced_1f1b(const ComputationGraph& g, int stages);

// Same traversal with equal targets M_G / l.
Cut memory_balanced_sync(const ComputationGraph& g, int stages);

struct BalancedPair {
  int cb = 0;  // compute-balanced position
  int mb = 0;  // memory-balanced position
  int lo() const { return cb < mb ? cb : mb; }
  int hi() const { return cb < mb ? mb : cb; }
};

// Two-way split of `r` into a left super-stage covering pipeline stages
// [first_stage, first_stage + left_span) and a right one covering the next
// right_span stages.
BalancedPair comp_mem_bal_split(const ComputationGraph& g, Range r, int first_stage,
                                int left_span, int right_span, int stages,
                                Schedule s);

}  // namespace dawnplan
