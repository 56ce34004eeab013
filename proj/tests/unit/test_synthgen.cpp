// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <nlohmann/json.hpp>

#include "dawnplan/error.hpp"
#include "dawnplan/simulator.hpp"
#include "dawnplan/synthgen.hpp"
#include "test_support.hpp"

using namespace dawnplan;
using namespace dawnplan::testing;

TEST_CASE("uniform generator reproduces the fixture") {
  const auto g = gen_uniform(8, 1000, kMiB);
  const auto u = uni8();
  REQUIRE(g.size() == u.size());
  for (int i = 0; i < 8; ++i) {
    CHECK(g.node(i).t_f == u.node(i).t_f);
    CHECK(g.node(i).t_b == u.node(i).t_b);
    CHECK(g.node(i).m_a == u.node(i).m_a);
    CHECK(g.node(i).m_p == 0);
    CHECK(g.node(i).m_d == 0);
  }
  CHECK(cumulative_series(g).back().peak_mem == cumulative_series(u).back().peak_mem);
  CHECK(gen_uniform(2, 1000, kMiB).size() == 2);
  CHECK_THROWS(gen_uniform(1, 1000, kMiB));
}

TEST_CASE("transformer-like graphs") {
  const auto g = gen_transformer_like(12, 42);
  CHECK(memory_cdf(g).activation.p90 <= static_cast<double>(kTransformerActivationCap));
  CHECK(profile_to_json(gen_transformer_like(12, 42)) == profile_to_json(g));
  CHECK(profile_to_json(gen_transformer_like(12, 43)) != profile_to_json(g));
  CHECK(gen_transformer_like(2, 0).size() >= 24);
  for (std::uint64_t seed : {0, 1, 42, 99})
    CHECK(time_memory_correlation(gen_transformer_like(6, seed)) >= 0.8);
  // The embedding output reaches the head, across any interior cut.
  const auto es = inevitable_comm(g, 1, g.size() - 3);
  CHECK_FALSE(es.empty());
  CHECK_THROWS(gen_transformer_like(1, 0));
}

TEST_CASE("cnn-like graphs") {
  const auto g = gen_cnn_like(16, 7);
  CHECK(profile_to_json(gen_cnn_like(16, 7)) == profile_to_json(g));
  for (std::uint64_t seed : {0, 7, 11, 23})
    CHECK(time_memory_correlation(gen_cnn_like(16, seed)) <= 0.1);

  // Compute-balanced partitioning wastes at least a quarter of the memory.
  PlanConfig cfg;
  cfg.stages = 4;
  cfg.capacity = 1024 * kGiB;
  cfg.bandwidth_bps = 16 * kGiB;
  const auto cb = assemble_plan(g, cfg, compute_balanced(g, {0, g.size() - 1}, {1, 1, 1, 1}));
  SimConfig sc;
  sc.bandwidth_bps = cfg.bandwidth_bps;
  CHECK(simulate(cb, g, sc).waste_ratio >= 0.25);

  const auto small = gen_cnn_like(2, 0);
  cfg.stages = 2;
  CHECK(plan(small, cfg).stages.size() == 2);
  CHECK_THROWS(gen_cnn_like(1, 0));
}

TEST_CASE("correlation helper") {
  // Time and memory both constant: no variance, reported as zero.
  CHECK(time_memory_correlation(uni8()) == doctest::Approx(0.0));
  const auto up = chain({{100, 100, kMiB}, {200, 200, 2 * kMiB}, {300, 300, 3 * kMiB}});
  CHECK(time_memory_correlation(up) == doctest::Approx(1.0));
  const auto down = chain({{100, 100, 3 * kMiB}, {200, 200, 2 * kMiB}, {300, 300, kMiB}});
  CHECK(time_memory_correlation(down) == doctest::Approx(-1.0));
}

TEST_CASE("two-workload scenario instance") {
  const auto inst = gpt2_like_scenario();
  CHECK(inst.memory_balanced.cuts.positions == std::vector<int>{1, 3, 7});
  CHECK(memory_balanced_1f1b(inst.graph, 4).positions == inst.memory_balanced.cuts.positions);
  CHECK(inst.compute_balanced_recompute.stages.size() == 4);
}
