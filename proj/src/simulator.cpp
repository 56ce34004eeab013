// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dawnplan/simulator.hpp"

#include <algorithm>
#include <ostream>

#include <nlohmann/json.hpp>

#include "dawnplan/error.hpp"

namespace dawnplan {

using nlohmann::json;

std::string to_string(SimEvent::Kind k) {
  switch (k) {
    case SimEvent::Kind::kForward: return "fwd";
    case SimEvent::Kind::kBackward: return "bwd";
    case SimEvent::Kind::kSendForward: return "comm_fwd";
    case SimEvent::Kind::kSendBackward: return "comm_bwd";
  }
  return "?";
}

std::string to_string(SimEvent::Phase p) {
  switch (p) {
    case SimEvent::Phase::kWarmup: return "warmup";
    case SimEvent::Phase::kSteady: return "steady";
    case SimEvent::Phase::kCooldown: return "cooldown";
  }
  return "?";
}

double waste_ratio(const std::vector<Bytes>& peaks) {
  if (peaks.empty()) return 0;
  const Bytes mx = *std::max_element(peaks.begin(), peaks.end());
  if (mx <= 0) return 0;
  double sum = 0;
  for (Bytes p : peaks) sum += static_cast<double>(mx - p);
  return sum / (static_cast<double>(peaks.size()) * static_cast<double>(mx));
}

namespace {

struct Op {
  bool forward = true;
  int mb = 0;  // 1-based
  SimEvent::Phase phase = SimEvent::Phase::kSteady;
};

std::vector<Op> stage_ops(Schedule s, int stage, int stages, int m) {
  std::vector<Op> ops;
  if (s == Schedule::kSync) {
    for (int j = 1; j <= m; ++j) ops.push_back({true, j, SimEvent::Phase::kSteady});
    for (int j = m; j >= 1; --j) ops.push_back({false, j, SimEvent::Phase::kSteady});
    return ops;
  }
  const int w = std::min(stages - stage, m);
  for (int j = 1; j <= w; ++j) ops.push_back({true, j, SimEvent::Phase::kWarmup});
  for (int k = 1; k <= m; ++k) {
    if (w + k <= m) {
      ops.push_back({true, w + k, SimEvent::Phase::kSteady});
      ops.push_back({false, k, SimEvent::Phase::kSteady});
    } else {
      ops.push_back({false, k, SimEvent::Phase::kCooldown});
    }
  }
  return ops;
}

}  // namespace

SimReport simulate(const PartitionPlan& plan, const ComputationGraph& g,
                   const SimConfig& cfg) {
  const int L = static_cast<int>(plan.stages.size());
  if (L < 1) throw DegenerateError("plan has no stages");
  if (plan.graph_hash != graph_hash(g))
    throw ValidationError("plan was made for a different graph (hash mismatch)", "");
  if (plan.stages.front().range.lo != 0 || plan.stages.back().range.hi != g.size() - 1)
    throw ValidationError("plan stages do not cover the graph", "");
  const int m = cfg.micro_batches > 0
                    ? cfg.micro_batches
                    : (cfg.schedule == Schedule::kSync ? L : 4 * L);

  std::vector<Micros> fwd_t(L), bwd_t(L), comm_t(std::max(L - 1, 0), 0);
  for (int x = 0; x < L; ++x) {
    const auto r = plan.stages[x].range;
    for (int i = r.lo; i <= r.hi; ++i) {
      fwd_t[x] += g.node(i).t_f;
      bwd_t[x] += g.node(i).t_b;
    }
    bwd_t[x] += plan.stages[x].memopt.added_time;
    if (x + 1 < L && cfg.bandwidth_bps > 0)
      comm_t[x] = transfer_time(cut_bytes(g, r.hi), cfg.bandwidth_bps);
  }

  // Arrival times of activations (from x-1) and gradients (from x+1); -1
  // while unknown.
  std::vector<std::vector<Micros>> act_in(L, std::vector<Micros>(m + 1, -1));
  std::vector<std::vector<Micros>> grad_in(L, std::vector<Micros>(m + 1, -1));
  std::vector<std::vector<Micros>> fwd_end(L, std::vector<Micros>(m + 1, -1));
  std::vector<std::vector<Micros>> bwd_end(L, std::vector<Micros>(m + 1, -1));
  std::vector<Micros> chan_f(L, 0), chan_b(L, 0), stage_free(L, 0);
  std::vector<std::vector<Op>> ops(L);
  std::vector<std::size_t> next(L, 0);
  for (int x = 0; x < L; ++x) ops[x] = stage_ops(cfg.schedule, x + 1, L, m);

  SimReport rep;
  rep.schedule = cfg.schedule;
  rep.micro_batches = m;
  int forwards_left = L * m;
  Micros barrier = 0;

  bool progress = true;
  while (progress) {
    progress = false;
    for (int x = 0; x < L; ++x) {
      while (next[x] < ops[x].size()) {
        const Op op = ops[x][next[x]];
        Micros ready = stage_free[x];
        if (op.forward) {
          if (x > 0) {
            if (act_in[x][op.mb] < 0) break;
            ready = std::max(ready, act_in[x][op.mb]);
          }
        } else {
          if (x + 1 < L) {
            if (grad_in[x][op.mb] < 0) break;
            ready = std::max(ready, grad_in[x][op.mb]);
          }
          if (cfg.schedule == Schedule::kSync) {
            if (forwards_left > 0) break;
            ready = std::max(ready, barrier);
          }
        }
        const Micros end = ready + (op.forward ? fwd_t[x] : bwd_t[x]);
        rep.trace.push_back({x + 1, op.mb,
                             op.forward ? SimEvent::Kind::kForward : SimEvent::Kind::kBackward,
                             op.phase, ready, end});
        stage_free[x] = end;
        if (op.forward) {
          fwd_end[x][op.mb] = end;
          --forwards_left;
          barrier = std::max(barrier, end);
          if (x + 1 < L) {
            Micros arrive = end;
            if (comm_t[x] > 0) {
              const Micros s = std::max(end, chan_f[x]);
              arrive = s + comm_t[x];
              chan_f[x] = arrive;
              rep.trace.push_back({x + 1, op.mb, SimEvent::Kind::kSendForward, op.phase, s,
                                   arrive});
            }
            act_in[x + 1][op.mb] = arrive;
          }
        } else {
          bwd_end[x][op.mb] = end;
          if (x > 0) {
            Micros arrive = end;
            if (comm_t[x - 1] > 0) {
              const Micros s = std::max(end, chan_b[x - 1]);
              arrive = s + comm_t[x - 1];
              chan_b[x - 1] = arrive;
              rep.trace.push_back({x + 1, op.mb, SimEvent::Kind::kSendBackward, op.phase, s,
                                   arrive});
            }
            grad_in[x - 1][op.mb] = arrive;
          }
        }
        ++next[x];
        progress = true;
      }
    }
  }
  for (int x = 0; x < L; ++x)
    if (next[x] != ops[x].size()) throw Error("simulation deadlocked");

  std::stable_sort(rep.trace.begin(), rep.trace.end(), [](const SimEvent& a, const SimEvent& b) {
    return std::tie(a.start, a.stage, a.mb) < std::tie(b.start, b.stage, b.mb);
  });

  for (const auto& e : rep.trace) rep.makespan = std::max(rep.makespan, e.end);

  rep.per_stage_peak.resize(L);
  rep.max_in_flight.resize(L);
  rep.busy.resize(L);
  rep.capacity_exceeded.resize(L);
  for (int x = 0; x < L; ++x) {
    // Activations are allocated when a forward starts and retired when the
    // micro-batch's backward completes on this stage.
    std::vector<std::pair<Micros, int>> deltas;
    for (int j = 1; j <= m; ++j) {
      const Micros fs = fwd_end[x][j] - fwd_t[x];
      deltas.push_back({fs, +1});
      deltas.push_back({bwd_end[x][j], -1});
    }
    std::sort(deltas.begin(), deltas.end());  // releases sort before allocations
    int cur = 0, mx = 0;
    for (auto [t, d] : deltas) {
      cur += d;
      mx = std::max(mx, cur);
    }
    rep.max_in_flight[x] = mx;
    rep.busy[x] = static_cast<Micros>(m) * (fwd_t[x] + bwd_t[x]);

    const auto& sp = plan.stages[x];
    const Bytes saved = sp.memopt.effective_saved;
    if (cfg.schedule == Schedule::kSync) {
      Bytes params = 0;
      for (int i = sp.range.lo; i <= sp.range.hi; ++i) params += g.node(i).m_p;
      const Bytes act = range_memory(g, sp.range.lo, sp.range.hi, false).peak;
      rep.per_stage_peak[x] = mx * std::max<Bytes>(0, act - saved) + params;
    } else {
      const Bytes micro = range_memory(g, sp.range.lo, sp.range.hi).peak;
      rep.per_stage_peak[x] = mx * std::max<Bytes>(0, micro - saved);
    }
    rep.capacity_exceeded[x] = cfg.capacity > 0 && rep.per_stage_peak[x] > cfg.capacity;
  }

  if (cfg.schedule == Schedule::kAsync1F1B && m > L) {
    rep.iteration_time = static_cast<double>(bwd_end[0][m] - bwd_end[0][L]) / (m - L);
  } else if (cfg.schedule == Schedule::kAsync1F1B) {
    rep.iteration_time = static_cast<double>(rep.makespan) / m;
  } else {
    rep.iteration_time = static_cast<double>(rep.makespan);
  }
  if (rep.makespan > 0) {
    double idle = 0;
    for (int x = 0; x < L; ++x) idle += static_cast<double>(rep.makespan - rep.busy[x]);
    rep.bubble_ratio = idle / (static_cast<double>(L) * static_cast<double>(rep.makespan));
  }
  rep.waste_ratio = waste_ratio(rep.per_stage_peak);
  return rep;
}

json report_to_json(const SimReport& r) {
  json stages = json::array();
  for (std::size_t x = 0; x < r.per_stage_peak.size(); ++x) {
    stages.push_back({{"stage", x + 1},
                      {"peak_bytes", r.per_stage_peak[x]},
                      {"max_in_flight", r.max_in_flight[x]},
                      {"busy_us", r.busy[x]},
                      {"capacity_exceeded", r.capacity_exceeded[x] != 0}});
  }
  return {{"schema", 1},
          {"schedule", to_string(r.schedule)},
          {"micro_batches", r.micro_batches},
          {"makespan_us", r.makespan},
          {"iteration_time_us", r.iteration_time},
          {"bubble_ratio", r.bubble_ratio},
          {"waste_ratio", r.waste_ratio},
          {"stages", std::move(stages)}};
}

void write_trace_csv(const SimReport& r, std::ostream& out) {
  out << "stage,mb,kind,start_us,end_us\n";
  for (const auto& e : r.trace)
    out << e.stage << ',' << e.mb << ',' << to_string(e.kind) << ',' << e.start << ','
        << e.end << '\n';
}

ScenarioReport compare_scenario(const PartitionPlan& memory_balanced,
                                   const PartitionPlan& compute_balanced_recompute,
                                   const ComputationGraph& g, const SimConfig& cfg) {
  ScenarioReport s;
  s.memory_balanced = simulate(memory_balanced, g, cfg);
  s.compute_balanced_recompute = simulate(compute_balanced_recompute, g, cfg);
  s.throughput_ratio =
      s.memory_balanced.iteration_time / s.compute_balanced_recompute.iteration_time;
  return s;
}

}  // namespace dawnplan
