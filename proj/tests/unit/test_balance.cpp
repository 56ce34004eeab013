// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <functional>

#include "dawnplan/balance.hpp"
#include "dawnplan/error.hpp"
#include "test_support.hpp"

using namespace dawnplan;
using namespace dawnplan::testing;

namespace {

// Brute force min-max over all single cuts with weights (a, b).
Micros best_two_way(const ComputationGraph& g, std::int64_t a, std::int64_t b) {
  const int n = g.size();
  double best = 1e300;
  for (int c = 0; c + 1 < n; ++c) {
    const double l = static_cast<double>(range_time(g, 0, c)) / static_cast<double>(a);
    const double r = static_cast<double>(range_time(g, c + 1, n - 1)) / static_cast<double>(b);
    best = std::min(best, std::max(l, r));
  }
  return static_cast<Micros>(std::llround(best * 1000));
}

Micros max_part(const ComputationGraph& g, const std::vector<int>& cuts) {
  Micros mx = 0;
  int lo = 0;
  for (std::size_t k = 0; k <= cuts.size(); ++k) {
    const int hi = k < cuts.size() ? cuts[k] : g.size() - 1;
    mx = std::max(mx, range_time(g, lo, hi));
    lo = hi + 1;
  }
  return mx;
}

// Every increasing cut vector of size k in [0, n-2].
void all_cuts(int n, int k, std::vector<int>& cur, const std::function<void()>& f) {
  if (static_cast<int>(cur.size()) == k) {
    f();
    return;
  }
  const int start = cur.empty() ? 0 : cur.back() + 1;
  for (int c = start; c + 1 < n; ++c) {
    cur.push_back(c);
    all_cuts(n, k, cur, f);
    cur.pop_back();
  }
}

}  // namespace

TEST_CASE("replica weights") {
  CHECK(replica_weight(Schedule::kAsync1F1B, 1, 4, 16) == 4);
  CHECK(replica_weight(Schedule::kAsync1F1B, 4, 4, 16) == 1);
  CHECK(replica_weight(Schedule::kSync, 2, 4, 16) == 16);
  CHECK(schedule_from_string("sync") == Schedule::kSync);
  CHECK(schedule_from_string("async") == Schedule::kAsync1F1B);
  CHECK(to_string(Schedule::kSync) == "sync");
}

TEST_CASE("compute-balanced examples") {
  const auto u = uni8();
  CHECK(compute_balanced(u, {0, 7}, {1, 1}).positions == std::vector<int>{3});
  CHECK(compute_balanced(tri4(), {0, 3}, {1, 1}).positions == std::vector<int>{2});
  CHECK(compute_balanced(u, {0, 7}, {3, 1}).positions == std::vector<int>{5});
  CHECK(compute_balanced(u, {0, 7}, {1, 1, 1, 1}).positions == std::vector<int>{1, 3, 5});
}

TEST_CASE("memory-balanced 1F1B examples") {
  CHECK(memory_balanced_1f1b(uni8(), 2).positions == std::vector<int>{2});
  CHECK(memory_balanced_1f1b(tri4(), 2).positions == std::vector<int>{0});
  CHECK_THROWS_AS(memory_balanced_1f1b(uni8(), 1), DegenerateError);
}

TEST_CASE("memory-balanced sync examples") {
  CHECK(memory_balanced_sync(uni8(), 2).positions == std::vector<int>{3});
  CHECK(memory_balanced_sync(uni8(), 4).positions == std::vector<int>{1, 3, 5});
  CHECK(memory_balanced_sync(tri4(), 2).positions == std::vector<int>{1});
  CHECK_THROWS_AS(memory_balanced_sync(tri4(), 1), DegenerateError);
}

TEST_CASE("comp-mem balanced pair") {
  const auto u = uni8();
  auto p = comp_mem_bal_split(u, {0, 7}, 1, 1, 1, 2, Schedule::kAsync1F1B);
  CHECK(p.cb == 3);
  CHECK(p.mb == 2);
  CHECK(p.lo() == 2);
  CHECK(p.hi() == 3);
  p = comp_mem_bal_split(u, {0, 7}, 1, 1, 1, 2, Schedule::kSync);
  CHECK(p.cb == 3);
  CHECK(p.mb == 3);
  p = comp_mem_bal_split(tri4(), {0, 3}, 1, 1, 1, 2, Schedule::kAsync1F1B);
  CHECK(p.cb == 2);
  CHECK(p.mb == 0);
}

TEST_CASE("stage profile applies the replica weight") {
  const auto sp = stage_profile(uni8(), {0, 2}, 1, Schedule::kAsync1F1B, 2, 8);
  CHECK(sp.micro_peak == 3 * kMiB);
  CHECK(sp.sched_peak == 6 * kMiB);
  CHECK(sp.time == 3000);
}

TEST_CASE("first-crossing property of the 1F1B traversal") {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto g = random_graph(seed, 24);
    for (int l : {2, 3, 4}) {
      const Cut c = memory_balanced_1f1b(g, l);
      REQUIRE(static_cast<int>(c.positions.size()) == l - 1);
      const double total = static_cast<double>(range_memory(g, 0, g.size() - 1).peak);
      double h = 0;
      for (int j = 1; j <= l; ++j) h += 1.0 / j;
      int lo = 0;
      for (int x = 1; x < l; ++x) {
        const int cut = c.positions[x - 1];
        const double target = total / (h * (l - x + 1));
        CHECK(static_cast<double>(range_memory(g, lo, cut).peak) >= target * (1 - 1e-12));
        if (cut > lo)
          CHECK(static_cast<double>(range_memory(g, lo, cut - 1).peak) < target);
        lo = cut + 1;
      }
    }
  }
}

TEST_CASE("sync traversal on constant memory takes ceil(n/l) nodes per stage") {
  for (int n : {8, 13, 20, 31}) {
    for (int l : {2, 3, 4}) {
      const auto g = chain(std::vector<ChainNode>(n, ChainNode{100, 100, kMiB}));
      const int per = (n + l - 1) / l;
      if ((l - 1) * per >= n) {
        CHECK_THROWS_AS(memory_balanced_sync(g, l), InfeasibleError);
        continue;
      }
      const Cut c = memory_balanced_sync(g, l);
      for (int k = 1; k < l; ++k) {
        CHECK(c.positions[k - 1] + 1 == k * per);
        // Within one node of the even split when the per-stage rounding
        // does not accumulate.
        if (n % l == 0) CHECK(std::abs(c.positions[k - 1] + 1 - k * n / l) <= 1);
      }
    }
  }
}

TEST_CASE("compute-balanced is an exact min-max") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = random_graph(seed, 12);
    for (int parts : {2, 3, 4}) {
      const Cut c = compute_balanced(g, {0, g.size() - 1}, std::vector<std::int64_t>(parts, 1));
      const Micros got = max_part(g, c.positions);
      std::vector<int> cur;
      all_cuts(g.size(), parts - 1, cur, [&] { CHECK(got <= max_part(g, cur)); });
    }
    for (auto [a, b] : {std::pair{1, 1}, std::pair{3, 1}, std::pair{2, 3}}) {
      const Cut c = compute_balanced(g, {0, g.size() - 1}, {a, b});
      const int p = c.positions[0];
      const double l = static_cast<double>(range_time(g, 0, p)) / a;
      const double r = static_cast<double>(range_time(g, p + 1, g.size() - 1)) / b;
      CHECK(static_cast<Micros>(std::llround(std::max(l, r) * 1000)) == best_two_way(g, a, b));
    }
  }
  const auto big = random_graph(99, 64);
  const Cut c = compute_balanced(big, {0, 63}, {1, 1});
  for (int k = 0; k < 63; ++k) CHECK(max_part(big, c.positions) <= max_part(big, {k}));
}
