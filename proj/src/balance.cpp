// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dawnplan/balance.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "dawnplan/error.hpp"

namespace dawnplan {

namespace {

using i128 = __int128;

constexpr int kMaxStages = 32;

// Non-negative rational used for exact min-max comparisons of t / w.
struct Ratio {
  i128 num = 0;
  i128 den = 1;
};
bool operator<(const Ratio& a, const Ratio& b) { return a.num * b.den < b.num * a.den; }
bool operator<=(const Ratio& a, const Ratio& b) { return !(b < a); }
Ratio max_of(const Ratio& a, const Ratio& b) { return a < b ? b : a; }

std::int64_t lcm_upto(int n) {
  std::int64_t l = 1;
  for (int i = 2; i <= n; ++i) l = std::lcm(l, static_cast<std::int64_t>(i));
  return l;
}

void check_stages(int stages) {
  if (stages < 2) throw DegenerateError("stage count must be at least 2");
  if (stages > kMaxStages)
    throw DegenerateError("stage count above " + std::to_string(kMaxStages));
}

// First-crossing traversal shared by every memory-balance variant. Stage k
// (0-based) ends at the first node where peak * den[k] >= total * num[k].
std::vector<int> first_crossing(const ComputationGraph& g, Range r, Bytes total,
                                const std::vector<i128>& num,
                                const std::vector<i128>& den) {
  const int cuts_wanted = static_cast<int>(num.size());
  std::vector<int> cuts;
  Bytes cur = 0, peak = 0;
  for (int i = r.lo; i <= r.hi && static_cast<int>(cuts.size()) < cuts_wanted; ++i) {
    const auto& n = g.node(i);
    cur += n.m_a + n.m_p;
    peak = std::max(peak, cur);
    cur -= n.m_d;
    const auto k = cuts.size();
    if (static_cast<i128>(peak) * den[k] >= static_cast<i128>(total) * num[k]) {
      cuts.push_back(i);
      cur = 0;
      peak = 0;
    }
  }
  return cuts;
}

Cut finish_memory_cut(std::vector<int> cuts, Range r, int stages) {
  if (static_cast<int>(cuts.size()) != stages - 1 || cuts.back() >= r.hi) {
    throw InfeasibleError("memory-balanced traversal produced fewer than " +
                              std::to_string(stages) + " nonempty stages",
                          0);
  }
  return Cut{std::move(cuts)};
}

}  // namespace

std::string to_string(Schedule s) { return s == Schedule::kSync ? "sync" : "async"; }

Schedule schedule_from_string(const std::string& s) {
  if (s == "sync") return Schedule::kSync;
  if (s == "async" || s == "1f1b" || s == "async_1f1b") return Schedule::kAsync1F1B;
  throw ParseError("unknown schedule '" + s + "'");
}

std::int64_t replica_weight(Schedule s, int stage, int stages, int micro_batches) {
  if (s == Schedule::kAsync1F1B) return stages - stage + 1;
  return micro_batches;
}

StageMemProfile stage_profile(const ComputationGraph& g, Range r, int stage,
                              Schedule s, int stages, int micro_batches) {
  StageMemProfile p;
  p.stage = stage;
  p.micro_peak = range_memory(g, r.lo, r.hi).peak;
  p.sched_peak = replica_weight(s, stage, stages, micro_batches) * p.micro_peak;
  p.time = range_time(g, r.lo, r.hi);
  return p;
}

Cut compute_balanced(const ComputationGraph& g, Range r,
                     const std::vector<std::int64_t>& weights) {
  const int parts = static_cast<int>(weights.size());
  if (parts < 1) throw DegenerateError("compute_balanced needs at least one part");
  if (r.lo < 0 || r.hi >= g.size() || r.size() < 1)
    throw DegenerateError("compute_balanced: empty or out-of-range interval");
  for (auto w : weights)
    if (w <= 0) throw DegenerateError("compute_balanced: weights must be positive");
  // Each part needs at least as many nodes as pipeline stages it will cover.
  std::vector<int> min_size(parts);
  for (int k = 0; k < parts; ++k) min_size[k] = static_cast<int>(weights[k]);
  const int need = std::accumulate(min_size.begin(), min_size.end(), 0);
  if (need > r.size()) {
    // Fall back to one node per part before declaring the range too small.
    std::fill(min_size.begin(), min_size.end(), 1);
    if (parts > r.size())
      throw DegenerateError("compute_balanced: more parts than nodes in range");
  }

  const int n = r.size();
  std::vector<Micros> prefix(n + 1, 0);
  for (int i = 0; i < n; ++i)
    prefix[i + 1] = prefix[i] + g.node(r.lo + i).t_f + g.node(r.lo + i).t_b;
  auto part = [&](int a, int b, int k) {  // local nodes [a, b] as part k
    return Ratio{prefix[b + 1] - prefix[a], weights[k]};
  };
  // Smallest local start index the parts k.. may begin at, and the largest
  // local end index part k may stop at.
  std::vector<int> tail_need(parts + 1, 0);
  for (int k = parts - 1; k >= 0; --k) tail_need[k] = tail_need[k + 1] + min_size[k];

  const Ratio inf{1, 0};
  // best[k][i]: optimal max ratio for parts k..parts-1 covering local [i, n).
  std::vector<std::vector<Ratio>> best(parts, std::vector<Ratio>(n + 1, inf));
  for (int i = 0; i + min_size[parts - 1] <= n; ++i) best[parts - 1][i] = part(i, n - 1, parts - 1);
  for (int k = parts - 2; k >= 0; --k) {
    for (int i = 0; i + tail_need[k] <= n; ++i) {
      Ratio b = inf;
      for (int c = i + min_size[k] - 1; c + tail_need[k + 1] <= n - 1; ++c) {
        Ratio v = max_of(part(i, c, k), best[k + 1][c + 1]);
        if (v < b) b = v;
      }
      best[k][i] = b;
    }
  }
  const Ratio opt = best[0][0];

  Cut cut;
  int i = 0;
  for (int k = 0; k < parts - 1; ++k) {
    int chosen = -1;
    for (int c = i + min_size[k] - 1; c + tail_need[k + 1] <= n - 1; ++c) {
      if (part(i, c, k) <= opt && best[k + 1][c + 1] <= opt) {
        chosen = c;
        break;
      }
    }
    cut.positions.push_back(r.lo + chosen);
    i = chosen + 1;
  }
  return cut;
}

Cut memory_balanced_1f1b(const ComputationGraph& g, int stages) {
  check_stages(stages);
  const Bytes total = range_memory(g, 0, g.size() - 1).peak;
  if (total <= 0) throw DegenerateError("graph peak memory must be positive");
  // H_l = sum_{i=0}^{l-1} 1/(l-i) = P / Q. Target for stage x is
  // M_G / (l * H_l) * l / (l-x+1) = M_G * Q / ((l-x+1) * P).
  const i128 q = lcm_upto(stages);
  i128 p = 0;
  for (int j = 1; j <= stages; ++j) p += q / j;
  std::vector<i128> num, den;
  for (int x = 1; x < stages; ++x) {
    num.push_back(q);
    den.push_back(static_cast<i128>(stages - x + 1) * p);
  }
  Range all{0, g.size() - 1};
  return finish_memory_cut(first_crossing(g, all, total, num, den), all, stages);
}

Cut memory_balanced_sync(const ComputationGraph& g, int stages) {
  check_stages(stages);
  const Bytes total = range_memory(g, 0, g.size() - 1).peak;
  if (total <= 0) throw DegenerateError("graph peak memory must be positive");
  std::vector<i128> num(stages - 1, 1), den(stages - 1, stages);
  Range all{0, g.size() - 1};
  return finish_memory_cut(first_crossing(g, all, total, num, den), all, stages);
}

BalancedPair comp_mem_bal_split(const ComputationGraph& g, Range r, int first_stage,
                                int left_span, int right_span, int stages,
                                Schedule s) {
  if (left_span < 1 || right_span < 1)
    throw DegenerateError("comp_mem_bal_split: spans must be positive");
  if (r.size() < 2) throw DegenerateError("comp_mem_bal_split: range too small");
  check_stages(stages);

  BalancedPair out;
  // The compute-balanced position is the boundary between the two halves in
  // the best (left_span + right_span)-way split of the range, which can sit
  // away from the time midpoint when nodes are coarse.
  if (left_span + right_span <= r.size()) {
    const std::vector<std::int64_t> ones(left_span + right_span, 1);
    out.cb = compute_balanced(g, r, ones).positions.at(left_span - 1);
  } else {
    out.cb = compute_balanced(g, r, {left_span, right_span}).positions.at(0);
  }

  // Clamp so both sides keep at least one node per stage they will hold.
  int min_cut = r.lo, max_cut = r.hi - 1;
  if (left_span + right_span <= r.size()) {
    min_cut = r.lo + left_span - 1;
    max_cut = r.hi - right_span;
  }

  // Left target = M_range * A_left / (A_left + A_right), with A the summed
  // replica-inverse weights (1F1B) or the plain span (sync).
  i128 a_left = 0, a_right = 0;
  if (s == Schedule::kAsync1F1B) {
    const i128 q = lcm_upto(stages);
    for (int x = first_stage; x < first_stage + left_span; ++x) a_left += q / (stages - x + 1);
    for (int x = first_stage + left_span; x < first_stage + left_span + right_span; ++x)
      a_right += q / (stages - x + 1);
  } else {
    a_left = left_span;
    a_right = right_span;
  }
  const Bytes total = range_memory(g, r.lo, r.hi).peak;
  if (total <= 0) {
    out.mb = out.cb;
    return out;
  }
  auto cuts = first_crossing(g, r, total, {a_left}, {a_left + a_right});
  out.mb = cuts.empty() ? max_cut : cuts.front();
  out.mb = std::clamp(out.mb, min_cut, max_cut);
  return out;
}

}  // namespace dawnplan
