// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dawnplan/memopt.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "dawnplan/error.hpp"

namespace dawnplan {

StageTimeline build_timeline(const ComputationGraph& g, Range r) {
  StageTimeline tl;
  tl.range = r;
  const int n = r.size();
  tl.fwd_done.resize(n);
  tl.bwd_start.resize(n);
  Micros t = 0;
  for (int i = 0; i < n; ++i) {
    t += g.node(r.lo + i).t_f;
    tl.fwd_done[i] = t;
  }
  Micros b = t;
  for (int i = n - 1; i >= 0; --i) {
    tl.bwd_start[i] = b;
    b += g.node(r.lo + i).t_b;
  }
  tl.compute = b;
  return tl;
}

Micros free_time(Micros fwd_done, Micros bwd_access, Micros out_time, Micros in_time) {
  return (bwd_access - fwd_done) - (out_time + in_time);
}

StageCandidates collect_candidates(const ComputationGraph& g, const StageTimeline& tl,
                                   std::int64_t bandwidth_bps) {
  StageCandidates out;
  const Range r = tl.range;
  auto inside = [&](int i) { return i >= r.lo && i <= r.hi; };

  for (const auto& t : g.tensors()) {
    if (!inside(t.backward_access)) continue;

    SwapCandidate s;
    s.tensor = t;
    s.out_time = transfer_time(t.size, bandwidth_bps);
    s.in_time = s.out_time;
    // A tensor received from an earlier stage is available from stage start.
    const Micros done = inside(t.producer) ? tl.fwd_done[t.producer - r.lo] : 0;
    s.free_time = free_time(done, tl.bwd_start[t.backward_access - r.lo], s.out_time,
                            s.in_time);
    out.swaps.push_back(s);

    if (!inside(t.producer)) continue;
    // Walk back through producers whose outputs are not kept; they must run
    // again. Kept outputs bound the chain.
    std::set<int> chain{t.producer}, inputs;
    std::vector<int> stack{t.producer};
    bool crosses = false;
    while (!stack.empty() && !crosses) {
      int u = stack.back();
      stack.pop_back();
      for (int p : g.producers(u)) {
        if (g.retained(p)) {
          inputs.insert(p);
        } else if (!inside(p)) {
          crosses = true;
          break;
        } else if (chain.insert(p).second) {
          stack.push_back(p);
        }
      }
    }
    if (crosses) continue;
    RecomputeCandidate rc;
    rc.tensor = t;
    rc.chain.assign(chain.begin(), chain.end());
    rc.inputs.assign(inputs.begin(), inputs.end());
    for (int u : rc.chain) rc.recompute_time += g.node(u).t_f;
    if (rc.recompute_time <= 0) continue;
    rc.msps = static_cast<double>(t.size) * 1e6 / static_cast<double>(rc.recompute_time);
    out.recomputes.push_back(std::move(rc));
  }
  return out;
}

Bytes peak_after_removal(const ComputationGraph& g, Range r,
                         const std::vector<TensorRef>& removed) {
  std::vector<Bytes> drop(r.size() + 1, 0);
  for (const auto& t : removed)
    if (t.producer >= r.lo && t.producer <= r.hi) drop[t.producer - r.lo] += t.size;
  Bytes cur = 0, red = 0, peak = 0;
  for (int i = 0; i < r.size(); ++i) {
    const auto& n = g.node(r.lo + i);
    cur += n.m_a + n.m_p;
    red += drop[i];
    peak = std::max(peak, cur - red);
    cur -= n.m_d;
  }
  return peak;
}

namespace {

// Memory series of a stage under a growing set of removed tensors, with
// O(1) queries for the peak after one more removal.
class PeakTracker {
 public:
  PeakTracker(const ComputationGraph& g, Range r) : r_(r) {
    Bytes cur = 0;
    for (int i = r.lo; i <= r.hi; ++i) {
      const auto& n = g.node(i);
      cur += n.m_a + n.m_p;
      adj_.push_back(cur);
      cur -= n.m_d;
    }
    rebuild();
  }

  Bytes peak() const { return adj_.empty() ? 0 : prefix_.back(); }

  // Peak if `t` were removed as well.
  Bytes peak_without(const TensorRef& t) const {
    if (t.producer < r_.lo || t.producer > r_.hi) return peak();
    const int p = t.producer - r_.lo;
    Bytes before = p > 0 ? prefix_[p - 1] : 0;
    return std::max(before, suffix_[p] - t.size);
  }

  void remove(const TensorRef& t) {
    if (t.producer < r_.lo || t.producer > r_.hi) return;
    for (std::size_t i = t.producer - r_.lo; i < adj_.size(); ++i) adj_[i] -= t.size;
    rebuild();
  }

 private:
  void rebuild() {
    const std::size_t n = adj_.size();
    prefix_.assign(n, 0);
    suffix_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      prefix_[i] = std::max(i ? prefix_[i - 1] : Bytes{0}, adj_[i]);
    for (std::size_t i = n; i-- > 0;)
      suffix_[i] = std::max(i + 1 < n ? suffix_[i + 1] : Bytes{0}, adj_[i]);
  }

  Range r_;
  std::vector<Bytes> adj_, prefix_, suffix_;
};

// Per-direction transfer budget: transfers hide under the stage's compute.
struct Channel {
  Micros budget = 0;
  Micros used_out = 0;
  Micros used_in = 0;

  bool fits(const SwapCandidate& s) const {
    return used_out + s.out_time <= budget && used_in + s.in_time <= budget;
  }
  // Transfer time that would spill past the budget.
  Micros excess(const SwapCandidate& s) const {
    auto spill = [&](Micros used, Micros add) {
      return std::max<Micros>(0, used + add - budget) - std::max<Micros>(0, used - budget);
    };
    return spill(used_out, s.out_time) + spill(used_in, s.in_time);
  }
  void take(const SwapCandidate& s) {
    used_out += s.out_time;
    used_in += s.in_time;
  }
};

bool fits(Bytes peak, std::int64_t weight, Bytes capacity) {
  return static_cast<__int128>(peak) * weight <= capacity;
}

}  // namespace

namespace {

// A chosen action before costing: exactly one of the pointers is set.
struct Pick {
  const SwapCandidate* swap = nullptr;
  const RecomputeCandidate* rc = nullptr;
  const TensorRef& tensor() const { return swap ? swap->tensor : rc->tensor; }
};

// Costs a set of picks. Swaps claim the transfer channel in order of
// decreasing free time; whatever spills past the budget is charged.
MemOptPlan cost_picks(const std::vector<Pick>& picks, Micros budget) {
  std::vector<const SwapCandidate*> swaps;
  for (const auto& p : picks)
    if (p.swap) swaps.push_back(p.swap);
  std::stable_sort(swaps.begin(), swaps.end(),
                   [](auto* a, auto* b) { return a->free_time > b->free_time; });
  MemOptPlan plan;
  Channel ch{budget};
  for (const auto* s : swaps) {
    const Micros eff = s->free_time - ch.excess(*s);
    ch.take(*s);
    plan.actions.push_back({MemOptAction::Kind::kSwap, s->tensor.id, s->tensor.size,
                            eff < 0 ? -eff : 0, eff});
  }
  for (const auto& p : picks) {
    if (!p.rc) continue;
    plan.actions.push_back({MemOptAction::Kind::kRecompute, p.rc->tensor.id, p.rc->tensor.size,
                            p.rc->recompute_time, 0});
  }
  for (const auto& a : plan.actions) {
    plan.bytes_saved += a.size;
    plan.added_time += a.overhead;
  }
  return plan;
}

// Plans derived from the greedy order: every prefix as chosen, and with
// exact swap/recompute modes plus its single-drop and single-exchange
// neighbours when small. Nothing here depends on the capacity, so the
// cheapest member that fits can only get cheaper as the capacity grows.
class PlanFamily {
 public:
  static constexpr std::size_t kMaxModes = 10;
  static constexpr std::size_t kMaxExchangeSet = 6;
  static constexpr std::size_t kMaxExchangePool = 24;

  PlanFamily(const ComputationGraph& g, Range r, const StageCandidates& cands, Micros budget)
      : g_(g), r_(r), cands_(cands), budget_(budget) {
    for (const auto& s : cands.swaps) swap_of_[s.tensor.id] = &s;
    for (const auto& rc : cands.recomputes) rc_of_[rc.tensor.id] = &rc;
  }

  // Cheapest member whose peak passes `ok`; ties go to fewer actions, then
  // to the earlier member.
  template <typename Pred>
  std::optional<MemOptPlan> cheapest(const std::vector<Pick>& order, Pred ok) {
    best_.reset();
    seen_.clear();
    for (std::size_t k = 1; k <= order.size(); ++k) {
      const std::vector<Pick> picks(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
      std::vector<const SwapCandidate*> set;
      for (const auto& p : picks) set.push_back(swap_of_.at(p.tensor().id));
      if (!ok(peak_of(set))) continue;
      offer(cost_picks(picks, budget_));
      if (set.size() > kMaxModes) continue;
      consider(set, ok);
      for (std::size_t i = 0; i < set.size() && set.size() > 1; ++i) {
        auto rest = set;
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
        consider(rest, ok);
      }
      if (set.size() > kMaxExchangeSet || cands_.swaps.size() > kMaxExchangePool) continue;
      for (std::size_t i = 0; i < set.size(); ++i) {
        for (const auto& s : cands_.swaps) {
          if (std::find(set.begin(), set.end(), &s) != set.end()) continue;
          auto next = set;
          next[i] = &s;
          consider(next, ok);
        }
      }
    }
    return best_;
  }

 private:
  Bytes peak_of(const std::vector<const SwapCandidate*>& set) const {
    std::vector<TensorRef> removed;
    for (const auto* s : set) removed.push_back(s->tensor);
    return peak_after_removal(g_, r_, removed);
  }

  void offer(MemOptPlan p) {
    if (!best_ || p.added_time < best_->added_time ||
        (p.added_time == best_->added_time && p.actions.size() < best_->actions.size())) {
      best_ = std::move(p);
    }
  }

  template <typename Pred>
  void consider(std::vector<const SwapCandidate*> set, Pred ok) {
    std::sort(set.begin(), set.end());
    if (!seen_.insert(set).second) return;
    if (!ok(peak_of(set))) return;
    best_modes(set);
  }

  // Exact swap/recompute choice for a fixed tensor set. Only the winning
  // mask is turned into a plan.
  void best_modes(std::vector<const SwapCandidate*> set) {
    std::stable_sort(set.begin(), set.end(),
                     [](auto* a, auto* b) { return a->free_time > b->free_time; });
    const std::size_t k = set.size();
    std::vector<const RecomputeCandidate*> rc(k, nullptr);
    for (std::size_t i = 0; i < k; ++i) {
      const auto it = rc_of_.find(set[i]->tensor.id);
      if (it != rc_of_.end()) rc[i] = it->second;
    }
    std::optional<std::uint32_t> best_mask;
    Micros best_cost = 0;
    for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
      bool ok = true;
      Micros cost = 0;
      Channel ch{budget_};
      for (std::size_t i = 0; i < k && ok; ++i) {
        if (mask >> i & 1) {
          ok = rc[i] != nullptr;
          if (!ok) break;
          cost += rc[i]->recompute_time;
          // One level: a recomputed output may not feed another recompute.
          for (std::size_t j = 0; j < k && ok; ++j) {
            if (!(mask >> j & 1) || !rc[j]) continue;
            for (int in : rc[j]->inputs) ok = ok && in != rc[i]->tensor.producer;
          }
        } else {
          const Micros eff = set[i]->free_time - ch.excess(*set[i]);
          ch.take(*set[i]);
          cost += eff < 0 ? -eff : 0;
        }
      }
      if (!ok) continue;
      if (!best_mask || cost < best_cost) {
        best_mask = mask;
        best_cost = cost;
      }
    }
    if (!best_mask) return;
    std::vector<Pick> picks;
    for (std::size_t i = 0; i < k; ++i)
      picks.push_back(*best_mask >> i & 1 ? Pick{nullptr, rc[i]} : Pick{set[i], nullptr});
    offer(cost_picks(picks, budget_));
  }

  const ComputationGraph& g_;
  Range r_;
  const StageCandidates& cands_;
  Micros budget_;
  std::map<std::string, const SwapCandidate*> swap_of_;
  std::map<std::string, const RecomputeCandidate*> rc_of_;
  std::set<std::vector<const SwapCandidate*>> seen_;
  std::optional<MemOptPlan> best_;
};

}  // namespace

std::optional<MemOptPlan> optimize(const ComputationGraph& g, const MemOptRequest& req) {
  if (req.capacity <= 0) throw DegenerateError("capacity must be positive");
  if (req.replica_weight < 1) throw DegenerateError("replica weight must be >= 1");
  if (fits(req.micro_peak, req.replica_weight, req.capacity)) return MemOptPlan{};

  const StageTimeline tl = build_timeline(g, req.range);
  const StageCandidates cands = collect_candidates(g, tl, req.bandwidth_bps);
  PeakTracker tracker(g, req.range);
  const Bytes base = tracker.peak();
  auto fits_at = [&](Bytes tracker_peak) {
    return fits(req.micro_peak - (base - tracker_peak), req.replica_weight, req.capacity);
  };

  // The greedy order does not depend on the capacity: it keeps removing
  // tensors until nothing lowers the peak. Each prefix is a candidate plan.
  Channel ch{tl.compute};
  std::vector<Pick> picks;
  std::set<std::string> taken;
  std::set<int> dropped;        // producers whose output is recomputed
  std::set<int> needed_inputs;  // producers read by chosen recomputes

  auto take = [&](Pick p) {
    if (p.swap) ch.take(*p.swap);
    if (p.rc) {
      dropped.insert(p.rc->tensor.producer);
      needed_inputs.insert(p.rc->inputs.begin(), p.rc->inputs.end());
    }
    tracker.remove(p.tensor());
    taken.insert(p.tensor().id);
    picks.push_back(p);
  };
  auto recompute_ok = [&](const RecomputeCandidate& rc) {
    if (taken.count(rc.tensor.id) || needed_inputs.count(rc.tensor.producer)) return false;
    for (int in : rc.inputs)
      if (dropped.count(in)) return false;
    return true;
  };

  // Phase 1: swaps that overlap entirely with compute, most slack first.
  std::vector<const SwapCandidate*> order;
  for (const auto& s : cands.swaps)
    if (s.free_time >= 0) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) {
    return a->free_time > b->free_time;
  });
  for (bool progress = true; progress;) {
    progress = false;
    for (const auto* s : order) {
      if (taken.count(s->tensor.id) || !ch.fits(*s)) continue;
      if (tracker.peak_without(s->tensor) >= tracker.peak()) continue;
      take({s, nullptr});
      progress = true;
    }
  }

  // Phase 2: cheaper of the best swap (overhead per byte) and the best
  // recompute (highest MSPS).
  for (;;) {
    const SwapCandidate* best_swap = nullptr;
    Micros best_swap_cost = 0;
    for (const auto& s : cands.swaps) {
      if (taken.count(s.tensor.id)) continue;
      if (tracker.peak_without(s.tensor) >= tracker.peak()) continue;
      const Micros eff_free = s.free_time - ch.excess(s);
      const Micros cost = eff_free < 0 ? -eff_free : 0;
      if (!best_swap || static_cast<__int128>(cost) * best_swap->tensor.size <
                            static_cast<__int128>(best_swap_cost) * s.tensor.size) {
        best_swap = &s;
        best_swap_cost = cost;
      }
    }
    const RecomputeCandidate* best_rc = nullptr;
    for (const auto& rc : cands.recomputes) {
      if (!recompute_ok(rc)) continue;
      if (tracker.peak_without(rc.tensor) >= tracker.peak()) continue;
      if (!best_rc || static_cast<__int128>(rc.recompute_time) * best_rc->tensor.size <
                          static_cast<__int128>(best_rc->recompute_time) * rc.tensor.size) {
        best_rc = &rc;
      }
    }
    if (!best_swap && !best_rc) break;
    const bool use_swap =
        best_swap && (!best_rc || static_cast<__int128>(best_swap_cost) * best_rc->tensor.size <=
                                      static_cast<__int128>(best_rc->recompute_time) *
                                          best_swap->tensor.size);
    take(use_swap ? Pick{best_swap, nullptr} : Pick{nullptr, best_rc});
  }

  PlanFamily family(g, req.range, cands, tl.compute);
  auto best = family.cheapest(picks, [&](Bytes peak) { return fits_at(peak); });
  if (!best) return std::nullopt;
  std::vector<TensorRef> removed;
  for (const auto& a : best->actions)
    for (const auto& s : cands.swaps)
      if (s.tensor.id == a.tensor) removed.push_back(s.tensor);
  best->effective_saved = base - peak_after_removal(g, req.range, removed);
  return best;
}

std::optional<MemOptPlan> optimize_exhaustive(const ComputationGraph& g,
                                              const MemOptRequest& req) {
  if (req.capacity <= 0) throw DegenerateError("capacity must be positive");
  MemOptPlan empty;
  if (fits(req.micro_peak, req.replica_weight, req.capacity)) return empty;

  const StageTimeline tl = build_timeline(g, req.range);
  const StageCandidates cands = collect_candidates(g, tl, req.bandwidth_bps);
  // Every swap candidate is one tensor; recompute candidates are a subset.
  const auto& swaps = cands.swaps;
  const int n = static_cast<int>(swaps.size());
  if (n > 12) throw InstanceTooLargeError("exhaustive memopt limited to 12 tensors");
  std::vector<const RecomputeCandidate*> rc_of(n, nullptr);
  for (int i = 0; i < n; ++i)
    for (const auto& rc : cands.recomputes)
      if (rc.tensor.id == swaps[i].tensor.id) rc_of[i] = &rc;

  const Bytes base = peak_after_removal(g, req.range, {});
  std::optional<MemOptPlan> best;
  std::vector<int> choice(n, 0);  // 0 none, 1 swap, 2 recompute
  std::int64_t total = 1;
  for (int i = 0; i < n; ++i) total *= 3;

  std::vector<int> swap_order(n);
  for (int i = 0; i < n; ++i) swap_order[i] = i;
  std::stable_sort(swap_order.begin(), swap_order.end(),
                   [&](int a, int b) { return swaps[a].free_time > swaps[b].free_time; });

  for (std::int64_t code = 0; code < total; ++code) {
    std::int64_t c = code;
    bool valid = true;
    for (int i = 0; i < n; ++i) {
      choice[i] = static_cast<int>(c % 3);
      c /= 3;
      if (choice[i] == 2 && !rc_of[i]) valid = false;
    }
    if (!valid) continue;
    std::set<int> dropped, needed;
    std::vector<TensorRef> removed;
    for (int i = 0; i < n; ++i) {
      if (choice[i] == 0) continue;
      removed.push_back(swaps[i].tensor);
      if (choice[i] == 2) {
        dropped.insert(rc_of[i]->tensor.producer);
        needed.insert(rc_of[i]->inputs.begin(), rc_of[i]->inputs.end());
      }
    }
    for (int p : dropped) valid = valid && !needed.count(p);
    if (!valid) continue;
    const Bytes peak = req.micro_peak - (base - peak_after_removal(g, req.range, removed));
    if (!fits(peak, req.replica_weight, req.capacity)) continue;

    MemOptPlan plan;
    Channel ch{tl.compute};
    for (int i : swap_order) {
      if (choice[i] != 1) continue;
      const Micros eff = swaps[i].free_time - ch.excess(swaps[i]);
      ch.take(swaps[i]);
      MemOptAction a{MemOptAction::Kind::kSwap, swaps[i].tensor.id, swaps[i].tensor.size,
                     eff < 0 ? -eff : 0, eff};
      plan.actions.push_back(a);
    }
    for (int i = 0; i < n; ++i) {
      if (choice[i] != 2) continue;
      plan.actions.push_back({MemOptAction::Kind::kRecompute, swaps[i].tensor.id,
                              swaps[i].tensor.size, rc_of[i]->recompute_time, 0});
    }
    for (const auto& a : plan.actions) {
      plan.bytes_saved += a.size;
      plan.added_time += a.overhead;
    }
    plan.effective_saved = req.micro_peak - peak;
    if (!best || plan.added_time < best->added_time ||
        (plan.added_time == best->added_time && plan.actions.size() < best->actions.size())) {
      best = std::move(plan);
    }
  }
  return best;
}

}  // namespace dawnplan
