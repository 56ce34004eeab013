// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>

#include <nlohmann/json.hpp>

#include "dawnplan/error.hpp"
#include "dawnplan/partitioner.hpp"
#include "test_support.hpp"

using namespace dawnplan;
using namespace dawnplan::testing;

namespace {

PlanConfig config(int stages, Schedule s, Bytes cap, std::int64_t bw = 16 * kGiB) {
  PlanConfig c;
  c.stages = stages;
  c.schedule = s;
  c.capacity = cap;
  c.bandwidth_bps = bw;
  return c;
}

NodeSpec node(const std::string& id, int depth, Micros start, Bytes m_a,
              std::vector<std::string> consumers) {
  NodeSpec n;
  n.id = id;
  n.depth = depth;
  n.fwd_start = start;
  n.t_f = 500;
  n.t_b = 500;
  n.m_a = m_a;
  n.consumers = std::move(consumers);
  return n;
}

// a -> {b, c} -> d -> e -> f -> g -> h, with b and c large.
ComputationGraph diamond() {
  std::vector<NodeSpec> s;
  s.push_back(node("a", 0, 0, kMiB, {"b", "c"}));
  s.push_back(node("b", 1, 500, 64 * kMiB, {"d"}));
  s.push_back(node("c", 1, 1000, 64 * kMiB, {"d"}));
  s.push_back(node("d", 2, 1500, kMiB, {"e"}));
  s.push_back(node("e", 3, 2000, kMiB, {"f"}));
  s.push_back(node("f", 4, 2500, kMiB, {"g"}));
  s.push_back(node("g", 5, 3000, kMiB, {"h"}));
  s.push_back(node("h", 6, 3500, kMiB, {}));
  return ComputationGraph("diamond", s);
}

// n1 feeds the last node as well as n2.
ComputationGraph with_skip(int n) {
  auto specs = chain_specs(std::vector<ChainNode>(n, ChainNode{500, 500, kMiB}));
  specs[0].consumers.push_back("n" + std::to_string(n));
  return ComputationGraph("skip", specs);
}

bool has_edge(const std::vector<Edge>& es, int from, int to) {
  return std::find(es.begin(), es.end(), Edge{from, to}) != es.end();
}

}  // namespace

TEST_CASE("inevitable communication") {
  const auto g = with_skip(8);
  const auto es = inevitable_comm(g, 3, 5);
  CHECK(has_edge(es, 0, 7));
  CHECK_FALSE(has_edge(es, 4, 5));
  // Degenerate interval: whatever crosses the single cut.
  const auto one = inevitable_comm(g, 4, 4);
  CHECK(has_edge(one, 0, 7));
  CHECK(has_edge(one, 4, 5));
  CHECK(one.size() == 2);
}

TEST_CASE("chain candidates carry one activation each") {
  SortContext ctx;
  ctx.range = {0, 7};
  ctx.bandwidth_bps = 16 * kGiB;
  const auto c = identify_and_sort(uni8(), BalancedPair{3, 2}, ctx);
  REQUIRE(c.size() == 2);
  CHECK(c[0].position == 2);  // memory-balanced end first
  CHECK(c[1].position == 3);
  for (const auto& cc : c) {
    CHECK(cc.comm_bytes == kMiB);
    CHECK(cc.shifted_from == -1);
  }
}

TEST_CASE("common consumer adjustment on a diamond") {
  const auto g = diamond();
  REQUIRE(g.node(1).id == "b");
  REQUIRE(g.node(3).id == "d");
  const std::vector<char> none(g.size(), 0);
  CHECK(crossing_producers(g, 2, none).size() == 2);
  CHECK(crossing_producers(g, 3, none).size() == 1);

  SortContext ctx;
  ctx.range = {0, 7};
  ctx.bandwidth_bps = kGiB;
  const auto c = identify_and_sort(g, BalancedPair{2, 3}, ctx);
  REQUIRE(c.size() == 1);
  CHECK(c[0].position == 3);
  CHECK(c[0].shifted_from == 2);
  CHECK(c[0].comm_bytes == kMiB);
}

TEST_CASE("comm filter can empty the list and the planner still answers") {
  const auto g = chain(std::vector<ChainNode>(6, ChainNode{1000, 1000, 10 * kGiB}));
  SortContext ctx;
  ctx.range = {0, 5};
  ctx.bandwidth_bps = kGiB;
  CHECK(identify_and_sort(g, BalancedPair{2, 1}, ctx).empty());
  const auto p = plan(g, config(2, Schedule::kAsync1F1B, 1024 * kGiB, kGiB));
  CHECK(p.cuts.positions.size() == 1);
}

TEST_CASE("adjacent partition examples") {
  const auto g = uni8();
  SUBCASE("compute-balanced cut already fits") {
    const auto r = adjacent_partition(g, {0, 7}, 1, config(2, Schedule::kAsync1F1B, 12 * kMiB));
    REQUIRE(r.feasible);
    CHECK(r.cuts == std::vector<int>{3});
    CHECK(r.min_t == 4000);
    for (const auto& m : r.memopt) CHECK(m.actions.empty());
  }
  SUBCASE("tighter capacity moves toward memory balance") {
    const auto r = adjacent_partition(g, {0, 7}, 1, config(2, Schedule::kAsync1F1B, 7 * kMiB));
    REQUIRE(r.feasible);
    CHECK(r.cuts == std::vector<int>{2});
    CHECK(r.min_t == 5000);
  }
  SUBCASE("nothing fits") {
    CHECK_FALSE(
        adjacent_partition(g, {0, 7}, 1, config(2, Schedule::kAsync1F1B, 2 * kMiB)).feasible);
    CHECK_THROWS_AS(plan(g, config(2, Schedule::kAsync1F1B, 2 * kMiB)), InfeasibleError);
  }
}

TEST_CASE("planner examples") {
  auto p = plan(uni8(), config(4, Schedule::kAsync1F1B, kGiB));
  CHECK(p.cuts.positions == std::vector<int>{1, 3, 5});
  CHECK(p.bottleneck == 2000);

  p = plan(tri4(), config(2, Schedule::kAsync1F1B, kGiB));
  CHECK(p.cuts.positions == std::vector<int>{2});
  CHECK(p.bottleneck == 6000);
  const auto sub = bipar(tri4(), {0, 3}, 1, 2, config(2, Schedule::kAsync1F1B, kGiB));
  const auto adj = adjacent_partition(tri4(), {0, 3}, 1, config(2, Schedule::kAsync1F1B, kGiB));
  CHECK(sub.cuts == adj.cuts);
  CHECK(sub.min_t == adj.min_t);

  p = plan(uni8(), config(2, Schedule::kSync, kGiB));
  CHECK(p.cuts.positions == std::vector<int>{3});
  CHECK(p.bottleneck == 4000);

  p = plan(tri4(), config(2, Schedule::kAsync1F1B, 9 * kMiB));
  CHECK(p.cuts.positions[0] >= 0);
  CHECK(p.cuts.positions[0] <= 2);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(plan(uni8(), config(1, Schedule::kAsync1F1B, kGiB)), DegenerateError);
  CHECK_THROWS_AS(plan(uni8(), config(2, Schedule::kAsync1F1B, 0)), DegenerateError);
  CHECK_THROWS_AS(plan(tri4(), config(8, Schedule::kAsync1F1B, kGiB)), DegenerateError);
}

TEST_CASE("plan invariants on random graphs") {
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const auto g = random_graph(seed, 20);
    for (Schedule s : {Schedule::kAsync1F1B, Schedule::kSync}) {
      for (int l : {2, 3, 4}) {
        auto cfg = config(l, s, 0, kRandomBandwidth);
        cfg.capacity = cb_max_sched_peak(g, l, s) * 3 / 4;
        Partitioner part(g, cfg);
        PartitionPlan p;
        try {
          p = part.plan();
        } catch (const InfeasibleError&) {
          continue;
        }
        CHECK(p.bottleneck == p.recompute_bottleneck());
        for (const auto& st : p.stages) CHECK(st.post_sched_peak(cfg) <= cfg.capacity);
        REQUIRE(static_cast<int>(p.stages.size()) == l);

        // Every chosen cut sits in the interval of the level that chose it.
        const auto levels = part.trace();
        for (int c : p.cuts.positions) {
          bool found = false;
          for (const auto& lvl : levels) {
            if (lvl.chosen != c) continue;
            CHECK(c >= lvl.pair.lo());
            CHECK(c <= lvl.pair.hi());
            found = true;
          }
          CHECK(found);
        }

        // Deterministic, and independent of the worker count.
        auto cfg4 = cfg;
        cfg4.jobs = 4;
        CHECK(plan_to_json(plan(g, cfg4)) == plan_to_json(p));
      }
    }
  }
}

TEST_CASE("plan json") {
  const auto g = random_graph(7, 16);
  auto cfg = config(4, Schedule::kAsync1F1B, 0, kRandomBandwidth);
  cfg.capacity = cb_max_sched_peak(g, 4, cfg.schedule) * 3 / 4;
  const auto p = plan(g, cfg);
  const auto j = plan_to_json(p);
  const auto back = plan_from_json(j);
  CHECK(plan_to_json(back) == j);
  CHECK(back.cuts.positions == p.cuts.positions);
  CHECK(back.bottleneck == p.bottleneck);

  auto bad = j;
  bad["bottleneck_us"] = p.bottleneck + 1;
  CHECK_THROWS_AS(plan_from_json(bad), ParseError);
  bad = j;
  bad["schema"] = 2;
  CHECK_THROWS_AS(plan_from_json(bad), ParseError);
}

TEST_CASE("stage ranges") {
  const auto r = stage_ranges(Cut{{1, 3, 5}}, 8);
  REQUIRE(r.size() == 4);
  CHECK(r[0].lo == 0);
  CHECK(r[0].hi == 1);
  CHECK(r[3].lo == 6);
  CHECK(r[3].hi == 7);
}
