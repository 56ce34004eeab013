// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dawnplan/partitioner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <map>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "dawnplan/error.hpp"

namespace dawnplan {

using nlohmann::json;

int PlanConfig::effective_micro_batches() const {
  if (micro_batches > 0) return micro_batches;
  return schedule == Schedule::kSync ? stages : 4 * stages;
}

Bytes StagePlan::post_sched_peak(const PlanConfig& cfg) const {
  const auto w = replica_weight(cfg.schedule, profile.stage, cfg.stages,
                                cfg.effective_micro_batches());
  return w * (profile.micro_peak - memopt.effective_saved);
}

Micros PartitionPlan::recompute_bottleneck() const {
  Micros b = 0;
  for (const auto& s : stages) b = std::max(b, s.total_time());
  return b;
}

std::vector<Range> stage_ranges(const Cut& cuts, int nodes) {
  std::vector<Range> out;
  int lo = 0;
  for (int c : cuts.positions) {
    out.push_back({lo, c});
    lo = c + 1;
  }
  out.push_back({lo, nodes - 1});
  return out;
}

// ---- communication -----------------------------------------------------------

std::vector<Edge> inevitable_comm(const ComputationGraph& g, int lo, int hi) {
  std::vector<Edge> out;
  for (int u = 0; u <= lo; ++u)
    for (int v : g.consumers(u))
      if (v > hi) out.push_back({u, v});
  return out;
}

std::vector<int> crossing_producers(const ComputationGraph& g, int cut,
                                    const std::vector<char>& inevitable) {
  std::vector<int> out;
  for (int u = 0; u <= cut; ++u) {
    if (!inevitable.empty() && inevitable[u]) continue;
    const auto& cs = g.consumers(u);
    if (!cs.empty() && cs.back() > cut) out.push_back(u);
  }
  return out;
}

std::vector<CandidateCut> identify_and_sort(const ComputationGraph& g, BalancedPair pair,
                                            const SortContext& ctx) {
  const int lo = pair.lo(), hi = pair.hi();
  const Range r = ctx.range;
  std::vector<char> inevitable(g.size(), 0);
  for (const auto& e : inevitable_comm(g, lo, hi)) inevitable[e.from] = 1;

  // Positions must leave each side enough nodes for its stages.
  const int min_pos = r.lo + ctx.left_span - 1;
  const int max_pos = r.hi - ctx.right_span;

  auto make = [&](int c) {
    CandidateCut cc;
    cc.position = c;
    for (int u : crossing_producers(g, c, inevitable)) cc.comm_bytes += g.node(u).m_a;
    cc.est_comm_time = transfer_time(cc.comm_bytes, ctx.bandwidth_bps);
    return cc;
  };
  auto passes = [&](const CandidateCut& cc) {
    const double left = static_cast<double>(range_time(g, r.lo, cc.position)) / ctx.left_span;
    const double right =
        static_cast<double>(range_time(g, cc.position + 1, r.hi)) / ctx.right_span;
    return static_cast<double>(cc.est_comm_time) <= ctx.comm_cap * std::min(left, right);
  };

  std::map<int, CandidateCut> kept;
  for (int c = std::max(lo, min_pos); c <= std::min(hi, max_pos); ++c) {
    CandidateCut cc = make(c);
    if (passes(cc)) {
      kept.emplace(c, cc);
      continue;
    }
    // Too much crosses here. If every crossing activation feeds one node in
    // the interval, cutting after that node leaves a single tensor crossing.
    const auto crossing = crossing_producers(g, c, inevitable);
    if (crossing.size() < 2) continue;
    int common = -1;
    bool single = true;
    for (int u : crossing) {
      for (int v : g.consumers(u)) {
        if (v <= c) continue;
        if (common < 0) common = v;
        single = single && v == common;
      }
    }
    if (!single || common < 0 || common > hi || common > max_pos) continue;
    CandidateCut shifted = make(common);
    shifted.shifted_from = c;
    if (crossing_producers(g, common, inevitable).size() < crossing.size() && passes(shifted))
      kept.emplace(common, shifted);
  }

  std::vector<CandidateCut> out;
  for (auto& [c, cc] : kept) out.push_back(cc);
  const int mb = pair.mb;
  std::stable_sort(out.begin(), out.end(), [mb](const CandidateCut& a, const CandidateCut& b) {
    return std::abs(a.position - mb) < std::abs(b.position - mb);
  });
  return out;
}

// ---- search ------------------------------------------------------------------

Partitioner::Partitioner(const ComputationGraph& g, PlanConfig cfg) : g_(g), cfg_(cfg) {
  if (cfg_.stages < 2) throw DegenerateError("stage count must be at least 2");
  if (cfg_.capacity <= 0) throw DegenerateError("capacity must be positive");
  if (cfg_.bandwidth_bps <= 0) throw DegenerateError("bandwidth must be positive");
  if (cfg_.stages > g_.size())
    throw DegenerateError("more stages than nodes in the graph");
}

std::optional<MemOptPlan> Partitioner::evaluate_stage(Range r, int stage) {
  const auto key = std::make_tuple(r.lo, r.hi, stage);
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = stage_memo_.find(key);
    if (it != stage_memo_.end()) return it->second;
  }
  const auto prof = stage_profile(g_, r, stage, cfg_.schedule, cfg_.stages,
                                  cfg_.effective_micro_batches());
  MemOptRequest req;
  req.range = r;
  req.micro_peak = prof.micro_peak;
  req.replica_weight = replica_weight(cfg_.schedule, stage, cfg_.stages,
                                      cfg_.effective_micro_batches());
  req.capacity = cfg_.capacity;
  req.bandwidth_bps = cfg_.bandwidth_bps;
  auto result = optimize(g_, req);
  std::lock_guard<std::mutex> lock(mu_);
  stage_memo_.emplace(key, result);
  return result;
}

std::vector<CandidateCut> Partitioner::candidates(Range r, BalancedPair pair, int left_span,
                                                  int right_span) {
  SortContext ctx{r, left_span, right_span, cfg_.bandwidth_bps, cfg_.comm_cap};
  auto out = identify_and_sort(g_, pair, ctx);
  if (out.empty()) {
    // Everything was comm-filtered: fall back to the memory-balanced end.
    CandidateCut cc;
    cc.position = pair.mb;
    cc.comm_bytes = cut_bytes(g_, pair.mb);
    cc.est_comm_time = transfer_time(cc.comm_bytes, cfg_.bandwidth_bps);
    out.push_back(cc);
  }
  return out;
}

void Partitioner::record(const SearchLevel& lvl) {
  std::lock_guard<std::mutex> lock(mu_);
  trace_.push_back(lvl);
}

std::vector<SearchLevel> Partitioner::trace() const {
  std::lock_guard<std::mutex> lock(mu_);
  auto out = trace_;
  std::sort(out.begin(), out.end(), [](const SearchLevel& a, const SearchLevel& b) {
    return std::tie(a.first_stage, a.last_stage, a.range.lo, a.range.hi) <
           std::tie(b.first_stage, b.last_stage, b.range.lo, b.range.hi);
  });
  return out;
}

SubPlan Partitioner::adjacent_partition(Range r, int sid) {
  SubPlan out;
  if (r.size() < 2) return out;
  const auto pair = comp_mem_bal_split(g_, r, sid, 1, 1, cfg_.stages, cfg_.schedule);
  SearchLevel lvl{r, sid, sid + 1, pair, -1};

  const int m = cfg_.effective_micro_batches();
  const auto left = stage_profile(g_, {r.lo, pair.cb}, sid, cfg_.schedule, cfg_.stages, m);
  const auto right =
      stage_profile(g_, {pair.cb + 1, r.hi}, sid + 1, cfg_.schedule, cfg_.stages, m);
  if (left.sched_peak <= cfg_.capacity && right.sched_peak <= cfg_.capacity) {
    out.feasible = true;
    out.min_t = std::max(left.time, right.time);
    out.cuts = {pair.cb};
    out.memopt = {MemOptPlan{}, MemOptPlan{}};
    lvl.chosen = pair.cb;
    record(lvl);
    return out;
  }

  for (const auto& cand : candidates(r, pair, 1, 1)) {
    const int c = cand.position;
    auto lm = evaluate_stage({r.lo, c}, sid);
    auto rm = lm ? evaluate_stage({c + 1, r.hi}, sid + 1) : std::nullopt;
    if (!lm || !rm) break;
    const Micros t = std::max(range_time(g_, r.lo, c) + lm->added_time,
                              range_time(g_, c + 1, r.hi) + rm->added_time);
    if (!out.feasible || t < out.min_t || (t == out.min_t && c < out.cuts[0])) {
      out.feasible = true;
      out.min_t = t;
      out.cuts = {c};
      out.memopt = {*lm, *rm};
    }
  }
  lvl.chosen = out.feasible ? out.cuts[0] : -1;
  record(lvl);
  return out;
}

SubPlan Partitioner::split(Range r, int first, int last, int left_span) {
  SubPlan out;
  const int span = last - first + 1;
  const int right_span = span - left_span;
  if (r.size() < span) return out;
  const auto pair =
      comp_mem_bal_split(g_, r, first, left_span, right_span, cfg_.stages, cfg_.schedule);
  SearchLevel lvl{r, first, last, pair, -1};
  const auto cands = candidates(r, pair, left_span, right_span);

  auto evaluate = [&](int c) {
    SubPlan l = bipar({r.lo, c}, first, first + left_span - 1);
    if (!l.feasible) return SubPlan{};
    SubPlan rr = bipar({c + 1, r.hi}, first + left_span, last);
    if (!rr.feasible) return SubPlan{};
    SubPlan joined;
    joined.feasible = true;
    joined.min_t = std::max(l.min_t, rr.min_t);
    joined.cuts = l.cuts;
    joined.cuts.push_back(c);
    joined.cuts.insert(joined.cuts.end(), rr.cuts.begin(), rr.cuts.end());
    joined.memopt = l.memopt;
    joined.memopt.insert(joined.memopt.end(), rr.memopt.begin(), rr.memopt.end());
    return joined;
  };

  // Evaluate every candidate up front when running in parallel; the early
  // break below is applied to the results in sort order either way.
  std::vector<std::optional<SubPlan>> results(cands.size());
  const bool top = first == 1 && last == cfg_.stages;
  if (top && cfg_.jobs > 1 && cands.size() > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const int n = std::min<int>(cfg_.jobs, static_cast<int>(cands.size()));
    for (int w = 0; w < n; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < cands.size();)
          results[i] = evaluate(cands[i].position);
      });
    }
    for (auto& t : workers) t.join();
  }

  for (std::size_t i = 0; i < cands.size(); ++i) {
    const int c = cands[i].position;
    SubPlan sub = results[i] ? std::move(*results[i]) : evaluate(c);
    if (!sub.feasible) break;
    const int pos = sub.cuts[left_span - 1];
    if (!out.feasible || sub.min_t < out.min_t ||
        (sub.min_t == out.min_t && pos < out.cuts[left_span - 1])) {
      out = std::move(sub);
    }
  }
  lvl.chosen = out.feasible ? out.cuts[left_span - 1] : -1;
  record(lvl);
  return out;
}

SubPlan Partitioner::bipar(Range r, int first, int last) {
  const Key key{r.lo, r.hi, first, last};
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
  }
  SubPlan out;
  const int span = last - first + 1;
  if (span == 1) {
    if (auto m = evaluate_stage(r, first)) {
      out.feasible = true;
      out.min_t = range_time(g_, r.lo, r.hi) + m->added_time;
      out.memopt = {*m};
    }
  } else if (span == 2) {
    out = adjacent_partition(r, first);
  } else if (span == 3) {
    // Walk the first stage's interval; the remaining two stages are an
    // adjacent pair.
    out = split(r, first, last, 1);
  } else {
    const int mid = (first + last) / 2;
    out = split(r, first, last, mid - first + 1);
  }
  std::lock_guard<std::mutex> lock(mu_);
  memo_.emplace(key, out);
  return out;
}

PartitionPlan Partitioner::plan() {
  SubPlan sub = bipar({0, g_.size() - 1}, 1, cfg_.stages);
  if (!sub.feasible) {
    // Report the stage that is worst off under the compute-balanced split.
    std::vector<std::int64_t> w(cfg_.stages, 1);
    Cut cb = compute_balanced(g_, {0, g_.size() - 1}, w);
    auto ranges = stage_ranges(cb, g_.size());
    int worst = 1;
    Bytes worst_peak = -1;
    for (int x = 1; x <= cfg_.stages; ++x) {
      auto p = stage_profile(g_, ranges[x - 1], x, cfg_.schedule, cfg_.stages,
                             cfg_.effective_micro_batches());
      if (p.sched_peak > worst_peak) {
        worst_peak = p.sched_peak;
        worst = x;
      }
    }
    throw InfeasibleError("no partition fits capacity " + std::to_string(cfg_.capacity) +
                              " bytes; most oversubscribed: stage " + std::to_string(worst) +
                              " (scheduled peak " + std::to_string(worst_peak) + " bytes)",
                          worst);
  }
  return assemble_plan(g_, cfg_, Cut{sub.cuts}, sub.memopt);
}

SubPlan adjacent_partition(const ComputationGraph& g, Range r, int sid,
                           const PlanConfig& cfg) {
  Partitioner p(g, cfg);
  return p.adjacent_partition(r, sid);
}

SubPlan bipar(const ComputationGraph& g, Range r, int first, int last,
              const PlanConfig& cfg) {
  Partitioner p(g, cfg);
  return p.bipar(r, first, last);
}

PartitionPlan plan(const ComputationGraph& g, const PlanConfig& cfg) {
  Partitioner p(g, cfg);
  return p.plan();
}

PartitionPlan assemble_plan(const ComputationGraph& g, const PlanConfig& cfg,
                            const Cut& cuts, const std::vector<MemOptPlan>& memopt) {
  PartitionPlan p;
  p.graph_name = g.name();
  p.graph_hash = graph_hash(g);
  p.config = cfg;
  p.cuts = cuts;
  const auto ranges = stage_ranges(cuts, g.size());
  for (int x = 1; x <= static_cast<int>(ranges.size()); ++x) {
    StagePlan s;
    s.range = ranges[x - 1];
    s.profile = stage_profile(g, s.range, x, cfg.schedule, cfg.stages,
                              cfg.effective_micro_batches());
    if (x - 1 < static_cast<int>(memopt.size())) s.memopt = memopt[x - 1];
    p.stages.push_back(std::move(s));
  }
  p.bottleneck = p.recompute_bottleneck();
  return p;
}

PartitionPlan assemble_plan(const ComputationGraph& g, const PlanConfig& cfg,
                            const Cut& cuts, bool* feasible) {
  Partitioner part(g, cfg);
  const auto ranges = stage_ranges(cuts, g.size());
  std::vector<MemOptPlan> memopt;
  bool ok = true;
  for (int x = 1; x <= static_cast<int>(ranges.size()); ++x) {
    auto m = part.evaluate_stage(ranges[x - 1], x);
    ok = ok && m.has_value();
    memopt.push_back(m.value_or(MemOptPlan{}));
  }
  if (feasible) *feasible = ok;
  return assemble_plan(g, cfg, cuts, memopt);
}

// ---- JSON --------------------------------------------------------------------

namespace {

json config_to_json(const PlanConfig& c) {
  return {{"stages", c.stages},
          {"schedule", to_string(c.schedule)},
          {"capacity_bytes", c.capacity},
          {"bandwidth_bps", c.bandwidth_bps},
          {"comm_cap", c.comm_cap},
          {"micro_batches", c.effective_micro_batches()}};
}

PlanConfig config_from_json(const json& j) {
  PlanConfig c;
  c.stages = j.at("stages").get<int>();
  c.schedule = schedule_from_string(j.at("schedule").get<std::string>());
  c.capacity = j.at("capacity_bytes").get<Bytes>();
  c.bandwidth_bps = j.at("bandwidth_bps").get<std::int64_t>();
  c.comm_cap = j.at("comm_cap").get<double>();
  c.micro_batches = j.at("micro_batches").get<int>();
  return c;
}

}  // namespace

json plan_to_json(const PartitionPlan& p) {
  json stages = json::array();
  for (const auto& s : p.stages) {
    json actions = json::array();
    for (const auto& a : s.memopt.actions) {
      json ja = {{"kind", a.kind == MemOptAction::Kind::kSwap ? "swap" : "recompute"},
                 {"tensor", a.tensor},
                 {"size_bytes", a.size},
                 {"overhead_us", a.overhead}};
      if (a.kind == MemOptAction::Kind::kSwap) ja["free_time_us"] = a.free_time;
      actions.push_back(std::move(ja));
    }
    stages.push_back({{"stage", s.profile.stage},
                      {"first", s.range.lo},
                      {"last", s.range.hi},
                      {"T_us", s.profile.time},
                      {"micro_peak_bytes", s.profile.micro_peak},
                      {"sched_peak_bytes", s.profile.sched_peak},
                      {"effective_saved_bytes", s.memopt.effective_saved},
                      {"post_sched_peak_bytes", s.post_sched_peak(p.config)},
                      {"memopt", std::move(actions)},
                      {"t_moo_us", s.memopt.added_time}});
  }
  return {{"schema", 1},
          {"graph", {{"name", p.graph_name}, {"hash", p.graph_hash}}},
          {"config", config_to_json(p.config)},
          {"cuts", p.cuts.positions},
          {"stages", std::move(stages)},
          {"bottleneck_us", p.bottleneck}};
}

PartitionPlan plan_from_json(const json& j) {
  try {
    if (j.at("schema").get<int>() != 1) throw ParseError("plan: unsupported schema");
    PartitionPlan p;
    p.graph_name = j.at("graph").at("name").get<std::string>();
    p.graph_hash = j.at("graph").at("hash").get<std::string>();
    p.config = config_from_json(j.at("config"));
    p.cuts.positions = j.at("cuts").get<std::vector<int>>();
    for (const auto& js : j.at("stages")) {
      StagePlan s;
      s.range = {js.at("first").get<int>(), js.at("last").get<int>()};
      s.profile.stage = js.at("stage").get<int>();
      s.profile.time = js.at("T_us").get<Micros>();
      s.profile.micro_peak = js.at("micro_peak_bytes").get<Bytes>();
      s.profile.sched_peak = js.at("sched_peak_bytes").get<Bytes>();
      s.memopt.effective_saved = js.at("effective_saved_bytes").get<Bytes>();
      s.memopt.added_time = js.at("t_moo_us").get<Micros>();
      for (const auto& ja : js.at("memopt")) {
        MemOptAction a;
        const auto kind = ja.at("kind").get<std::string>();
        if (kind == "swap") {
          a.kind = MemOptAction::Kind::kSwap;
          a.free_time = ja.at("free_time_us").get<Micros>();
        } else if (kind == "recompute") {
          a.kind = MemOptAction::Kind::kRecompute;
        } else {
          throw ParseError("plan: unknown memopt action '" + kind + "'");
        }
        a.tensor = ja.at("tensor").get<std::string>();
        a.size = ja.at("size_bytes").get<Bytes>();
        a.overhead = ja.at("overhead_us").get<Micros>();
        s.memopt.bytes_saved += a.size;
        s.memopt.actions.push_back(std::move(a));
      }
      p.stages.push_back(std::move(s));
    }
    p.bottleneck = j.at("bottleneck_us").get<Micros>();
    if (p.bottleneck != p.recompute_bottleneck())
      throw ParseError("plan: bottleneck_us does not match the stage list");
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("plan: ") + e.what());
  }
}

}  // namespace dawnplan
