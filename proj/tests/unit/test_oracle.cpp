// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

#include "dawnplan/error.hpp"
#include "dawnplan/oracle.hpp"
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

void rename(nlohmann::json& j, const std::map<std::string, std::string>& ids) {
  if (j.is_string()) {
    auto it = ids.find(j.get<std::string>());
    if (it != ids.end()) j = it->second;
  } else if (j.is_structured()) {
    for (auto& v : j) rename(v, ids);
  }
}

// Same graph under different node names, listed in reverse.
ComputationGraph relabeled(const ComputationGraph& g) {
  auto j = profile_to_json(g);
  std::map<std::string, std::string> ids;
  for (int i = 0; i < g.size(); ++i)
    ids[g.node(i).id] = "q" + std::to_string(g.size() - i) + "_" + g.node(i).id;
  rename(j["nodes"], ids);
  std::reverse(j["nodes"].begin(), j["nodes"].end());
  return profile_from_json(j);
}

}  // namespace

TEST_CASE("binomial") {
  CHECK(binomial(7, 1) == 7);
  CHECK(binomial(23, 3) == 1771);
  CHECK(binomial(5, 0) == 1);
  CHECK(binomial(3, 5) == 0);
  CHECK(binomial(200, 100) == INT64_MAX);
}

TEST_CASE("oracle examples") {
  auto p = exhaustive_plan(uni8(), config(2, Schedule::kAsync1F1B, kGiB));
  CHECK(p.cuts.positions == std::vector<int>{3});
  CHECK(p.bottleneck == 4000);

  p = exhaustive_plan(tri4(), config(2, Schedule::kAsync1F1B, kGiB));
  CHECK(p.cuts.positions == std::vector<int>{2});
  CHECK(p.bottleneck == 6000);

  p = exhaustive_plan(uni8(), config(2, Schedule::kAsync1F1B, 7 * kMiB));
  CHECK(p.cuts.positions == std::vector<int>{2});
  CHECK(p.bottleneck == 5000);

  CHECK_THROWS_AS(exhaustive_plan(uni8(), config(2, Schedule::kAsync1F1B, 2 * kMiB)),
                  InfeasibleError);
}

TEST_CASE("tuple guard") {
  const auto g = chain(std::vector<ChainNode>(200, ChainNode{10, 10, kMiB}));
  CHECK(binomial(199, 7) > kOracleTupleLimit);
  CHECK_THROWS_AS(exhaustive_plan(g, config(8, Schedule::kAsync1F1B, kGiB)),
                  InstanceTooLargeError);
}

TEST_CASE("containment on the fixtures") {
  auto v = verify_theorem(tri4(), config(2, Schedule::kAsync1F1B, kGiB));
  CHECK(v.pair.lo() == 0);
  CHECK(v.pair.hi() == 2);
  CHECK(v.optimal_cut == 2);
  CHECK(v.inside);
  CHECK(v.holds());

  v = verify_theorem(uni8(), config(2, Schedule::kSync, kGiB));
  CHECK(v.pair.lo() == 3);
  CHECK(v.pair.hi() == 3);
  CHECK(v.optimal_cut == 3);
  CHECK(v.inside);

  const auto j = verification_to_json(v);
  CHECK(j.at("inside") == true);
  CHECK(j.at("optimal_cut") == 3);
}

TEST_CASE("containment is not claimed when a premise fails") {
  auto specs = chain_specs(std::vector<ChainNode>(8, ChainNode{500, 500, kMiB}));
  specs[4].m_d = 5 * kMiB;
  const ComputationGraph g("dip", specs);
  const auto v = verify_theorem(g, config(2, Schedule::kAsync1F1B, kGiB));
  CHECK_FALSE(v.conditions.memory_monotone);
  CHECK(v.holds());
}

TEST_CASE("oracle bounds the planner") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const auto g = random_graph(seed, 14);
    for (int l : {2, 3, 4}) {
      auto cfg = config(l, Schedule::kAsync1F1B, 0, kRandomBandwidth);
      cfg.capacity = cb_max_sched_peak(g, l, cfg.schedule) * 4 / 5;
      PartitionPlan ours;
      try {
        ours = plan(g, cfg);
      } catch (const InfeasibleError&) {
        continue;
      }
      const auto best = exhaustive_plan(g, cfg);
      CHECK(best.bottleneck <= ours.bottleneck);
      CHECK(best.bottleneck == best.recompute_bottleneck());
    }
  }
}

TEST_CASE("oracle cuts do not depend on node names") {
  for (std::uint64_t seed = 30; seed <= 36; ++seed) {
    const auto g = random_graph(seed, 12);
    const auto h = relabeled(g);
    REQUIRE(h.node(0).id != g.node(0).id);
    for (int l : {2, 3}) {
      auto cfg = config(l, Schedule::kAsync1F1B, 0, kRandomBandwidth);
      cfg.capacity = cb_max_sched_peak(g, l, cfg.schedule) * 4 / 5;
      try {
        const auto a = exhaustive_plan(g, cfg);
        const auto b = exhaustive_plan(h, cfg);
        CHECK(a.cuts.positions == b.cuts.positions);
        CHECK(a.bottleneck == b.bottleneck);
      } catch (const InfeasibleError&) {
        CHECK_THROWS_AS(exhaustive_plan(h, cfg), InfeasibleError);
      }
    }
  }
}

TEST_CASE("exhaustive memopt never loses to the greedy one") {
  for (std::uint64_t seed = 40; seed <= 45; ++seed) {
    const auto g = random_graph(seed, 10);
    auto cfg = config(2, Schedule::kAsync1F1B, 0, 2 * kGiB);
    cfg.capacity = cb_max_sched_peak(g, 2, cfg.schedule) * 3 / 4;
    try {
      const auto greedy = exhaustive_plan(g, cfg);
      const auto exact = exhaustive_plan(g, cfg, OracleOptions{true});
      CHECK(exact.bottleneck <= greedy.bottleneck);
    } catch (const InfeasibleError&) {
    }
  }
}
