// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dawnplan/oracle.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "dawnplan/error.hpp"

namespace dawnplan {

using nlohmann::json;

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  __int128 r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > std::numeric_limits<std::int64_t>::max())
      return std::numeric_limits<std::int64_t>::max();
  }
  return static_cast<std::int64_t>(r);
}

namespace {

class StageCache {
 public:
  StageCache(const ComputationGraph& g, const PlanConfig& cfg, const OracleOptions& opts)
      : g_(g), cfg_(cfg), opts_(opts) {}

  const std::optional<MemOptPlan>& get(int lo, int hi, int stage) {
    const auto key = std::make_tuple(lo, hi, stage);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const int m = cfg_.effective_micro_batches();
    const auto prof = stage_profile(g_, {lo, hi}, stage, cfg_.schedule, cfg_.stages, m);
    MemOptRequest req{{lo, hi}, prof.micro_peak,
                      replica_weight(cfg_.schedule, stage, cfg_.stages, m), cfg_.capacity,
                      cfg_.bandwidth_bps};
    std::optional<MemOptPlan> r;
    if (opts_.exhaustive_memopt) {
      try {
        r = optimize_exhaustive(g_, req);
      } catch (const InstanceTooLargeError&) {
        r = optimize(g_, req);
      }
    } else {
      r = optimize(g_, req);
    }
    return cache_.emplace(key, std::move(r)).first->second;
  }

 private:
  const ComputationGraph& g_;
  const PlanConfig& cfg_;
  const OracleOptions& opts_;
  std::map<std::tuple<int, int, int>, std::optional<MemOptPlan>> cache_;
};

void check_config(const ComputationGraph& g, const PlanConfig& cfg) {
  if (cfg.stages < 2) throw DegenerateError("stage count must be at least 2");
  if (cfg.stages > g.size()) throw DegenerateError("more stages than nodes in the graph");
  if (cfg.capacity <= 0) throw DegenerateError("capacity must be positive");
  if (cfg.bandwidth_bps <= 0) throw DegenerateError("bandwidth must be positive");
}

// Calls fn(cuts, bottleneck, memopt) for every feasible tuple in
// lexicographic order.
template <typename Fn>
void enumerate(const ComputationGraph& g, const PlanConfig& cfg, StageCache& cache, Fn fn) {
  const int n = g.size(), k = cfg.stages - 1;
  std::vector<int> cuts(k);
  for (int i = 0; i < k; ++i) cuts[i] = i;
  std::vector<MemOptPlan> memopt(cfg.stages);
  while (true) {
    Micros worst = 0;
    bool ok = true;
    int lo = 0;
    for (int x = 0; x <= k && ok; ++x) {
      const int hi = x < k ? cuts[x] : n - 1;
      const auto& m = cache.get(lo, hi, x + 1);
      if (!m) {
        ok = false;
      } else {
        worst = std::max(worst, range_time(g, lo, hi) + m->added_time);
        memopt[x] = *m;
      }
      lo = hi + 1;
    }
    if (ok) fn(cuts, worst, memopt);
    // Next combination of k positions out of [0, n-2].
    int i = k - 1;
    while (i >= 0 && cuts[i] == n - 2 - (k - 1 - i)) --i;
    if (i < 0) break;
    ++cuts[i];
    for (int j = i + 1; j < k; ++j) cuts[j] = cuts[j - 1] + 1;
  }
}

}  // namespace

PartitionPlan exhaustive_plan(const ComputationGraph& g, const PlanConfig& cfg,
                              const OracleOptions& opts) {
  check_config(g, cfg);
  const auto tuples = binomial(g.size() - 1, cfg.stages - 1);
  if (tuples > kOracleTupleLimit) {
    throw InstanceTooLargeError("oracle would enumerate " + std::to_string(tuples) +
                                " cut tuples (limit " + std::to_string(kOracleTupleLimit) +
                                ")");
  }
  StageCache cache(g, cfg, opts);
  std::optional<std::vector<int>> best;
  Micros best_t = 0;
  std::vector<MemOptPlan> best_m;
  enumerate(g, cfg, cache, [&](const std::vector<int>& c, Micros t,
                               const std::vector<MemOptPlan>& m) {
    if (!best || t < best_t) {
      best = c;
      best_t = t;
      best_m = m;
    }
  });
  if (!best) throw InfeasibleError("no cut tuple fits capacity", 0);
  return assemble_plan(g, cfg, Cut{*best}, best_m);
}

TheoremVerification verify_theorem(const ComputationGraph& g, const PlanConfig& cfg_in,
                                   const ConditionOptions& copts) {
  PlanConfig cfg = cfg_in;
  cfg.stages = 2;
  check_config(g, cfg);
  TheoremVerification v;
  v.pair = comp_mem_bal_split(g, {0, g.size() - 1}, 1, 1, 1, 2, cfg.schedule);
  v.conditions = check_theorem_conditions(g, 2, cfg.bandwidth_bps, copts);

  StageCache cache(g, cfg, {});
  bool any = false;
  enumerate(g, cfg, cache, [&](const std::vector<int>& c, Micros t,
                               const std::vector<MemOptPlan>&) {
    if (!any || t < v.optimal_bottleneck) {
      any = true;
      v.optimal_bottleneck = t;
      v.optimal_cuts.clear();
    }
    if (t == v.optimal_bottleneck) v.optimal_cuts.push_back(c[0]);
  });
  if (!any) throw InfeasibleError("no two-stage cut fits capacity", 0);
  v.optimal_cut = v.optimal_cuts.front();
  for (int c : v.optimal_cuts)
    if (c >= v.pair.lo() && c <= v.pair.hi()) v.inside = true;
  return v;
}

json verification_to_json(const TheoremVerification& v) {
  const auto& c = v.conditions;
  return {{"schema", 1},
          {"interval", {v.pair.lo(), v.pair.hi()}},
          {"rho_cb", v.pair.cb},
          {"rho_mb", v.pair.mb},
          {"optimal_cut", v.optimal_cut},
          {"optimal_cuts", v.optimal_cuts},
          {"optimal_bottleneck_us", v.optimal_bottleneck},
          {"inside", v.inside},
          {"conditions_met", c.all()},
          {"flags",
           {{"compute_monotone", c.compute_monotone},
            {"memory_monotone", c.memory_monotone},
            {"comm_dominated", c.comm_dominated},
            {"memopt_evenly_distributed", c.memopt_evenly_distributed}}},
          {"details", c.details}};
}

}  // namespace dawnplan
