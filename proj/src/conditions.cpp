// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <sstream>

#include "dawnplan/balance.hpp"
#include "dawnplan/error.hpp"
#include "dawnplan/graph.hpp"

namespace dawnplan {

TheoremConditionReport check_theorem_conditions(const ComputationGraph& g, int stages,
                                                std::int64_t bandwidth_bps,
                                                const ConditionOptions& opts) {
  if (stages < 2) throw DegenerateError("stage count must be at least 2");
  if (bandwidth_bps <= 0) throw DegenerateError("bandwidth must be positive");
  TheoremConditionReport rep;
  const auto series = cumulative_series(g);

  rep.compute_monotone = true;
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].cum_time < series[i - 1].cum_time) {
      rep.compute_monotone = false;
      rep.details.push_back("compute: cumulative time drops at node " + g.node(i).id);
      break;
    }
  }

  rep.memory_monotone = true;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& p = series[i];
    const bool peak_ok = i == 0 || p.peak_mem >= series[i - 1].peak_mem;
    if (!peak_ok || static_cast<double>(p.cur_mem) <
                        opts.dip_tolerance * static_cast<double>(p.peak_mem)) {
      rep.memory_monotone = false;
      std::ostringstream os;
      os << "memory: current " << p.cur_mem << " B falls below " << opts.dip_tolerance
         << " x running peak " << p.peak_mem << " B at node " << g.node(i).id;
      rep.details.push_back(os.str());
      break;
    }
  }

  rep.comm_dominated = true;
  if (g.size() >= stages) {
    std::vector<std::int64_t> w(stages, 1);
    const Cut cb = compute_balanced(g, {0, g.size() - 1}, w);
    Micros min_stage = 0;
    int lo = 0;
    for (int k = 0; k < stages; ++k) {
      const int hi = k + 1 < stages ? cb.positions[k] : g.size() - 1;
      const Micros t = range_time(g, lo, hi);
      min_stage = k == 0 ? t : std::min(min_stage, t);
      lo = hi + 1;
    }
    for (int c = 0; c + 1 < g.size(); ++c) {
      const Micros t = transfer_time(cut_bytes(g, c), bandwidth_bps);
      if (t >= min_stage) {
        rep.comm_dominated = false;
        rep.details.push_back("comm: cut after node " + g.node(c).id + " needs " +
                              std::to_string(t) + " us, min stage time " +
                              std::to_string(min_stage) + " us");
        break;
      }
    }
  } else {
    rep.comm_dominated = false;
    rep.details.push_back("comm: fewer nodes than stages");
  }

  // Swap-candidate bytes per decile of the canonical order, by producer.
  std::vector<Bytes> bucket(10, 0);
  std::vector<char> used(10, 0);
  const int n = g.size();
  for (int i = 0; i < n; ++i) used[static_cast<std::size_t>(i) * 10 / n] = 1;
  for (const auto& t : g.tensors()) bucket[static_cast<std::size_t>(t.producer) * 10 / n] += t.size;
  Bytes lo_b = -1, hi_b = 0;
  for (int d = 0; d < 10; ++d) {
    if (!used[d]) continue;
    hi_b = std::max(hi_b, bucket[d]);
    lo_b = lo_b < 0 ? bucket[d] : std::min(lo_b, bucket[d]);
  }
  if (hi_b == 0) {
    rep.memopt_evenly_distributed = true;
  } else {
    rep.memopt_evenly_distributed =
        lo_b > 0 && static_cast<double>(hi_b) < opts.decile_ratio * static_cast<double>(lo_b);
    if (!rep.memopt_evenly_distributed) {
      rep.details.push_back("memopt: decile swap bytes range " + std::to_string(lo_b) +
                            ".." + std::to_string(hi_b) + " (heuristic metric)");
    }
  }
  return rep;
}

}  // namespace dawnplan
