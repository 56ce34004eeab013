// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dawnplan/balance.hpp"
#include "dawnplan/graph.hpp"
#include "dawnplan/partitioner.hpp"

namespace dawnplan {

struct SimConfig {
  int micro_batches = 0;  // 0: l for synchronous, 4l for 1F1B
  Schedule schedule = Schedule::kAsync1F1B;
  std::int64_t bandwidth_bps = 0;  // 0 disables communication events
  Bytes capacity = 0;              // 0 disables the exceedance check
};

struct SimEvent {
  enum class Kind { kForward, kBackward, kSendForward, kSendBackward };
  enum class Phase { kWarmup, kSteady, kCooldown };
  int stage = 0;  // 1-based; for sends, the sending stage
  int mb = 0;     // 1-based
  Kind kind = Kind::kForward;
  Phase phase = Phase::kSteady;
  Micros start = 0;
  Micros end = 0;
};

std::string to_string(SimEvent::Kind k);
std::string to_string(SimEvent::Phase p);

struct SimReport {
  Schedule schedule = Schedule::kAsync1F1B;
  int micro_batches = 0;
  std::vector<Bytes> per_stage_peak;
  std::vector<int> max_in_flight;        // micro-batches resident at once
  std::vector<Micros> busy;              // compute time per stage
  std::vector<char> capacity_exceeded;   // per stage
  Micros makespan = 0;
  // Synchronous: the makespan. 1F1B: steady-state gap between successive
  // backward completions on stage 1.
  double iteration_time = 0;
  double bubble_ratio = 0;
  double waste_ratio = 0;
  std::vector<SimEvent> trace;  // ordered by start, then stage

  double throughput() const { return iteration_time > 0 ? 1e6 / iteration_time : 0; }
};

SimReport simulate(const PartitionPlan& plan, const ComputationGraph& g,
                   const SimConfig& cfg);

// sum_x (max - p_x) / (l * max); 0 when every peak is 0.
double waste_ratio(const std::vector<Bytes>& peaks);

nlohmann::json report_to_json(const SimReport& r);
void write_trace_csv(const SimReport& r, std::ostream& out);

struct ScenarioReport {
  SimReport memory_balanced;
  SimReport compute_balanced_recompute;
  // Throughput of the second plan over the first.
  double throughput_ratio = 0;
};

ScenarioReport compare_scenario(const PartitionPlan& memory_balanced,
                                   const PartitionPlan& compute_balanced_recompute,
                                   const ComputationGraph& g, const SimConfig& cfg);

}  // namespace dawnplan
