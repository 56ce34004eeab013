// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dawnplan/error.hpp"
#include "dawnplan/graph.hpp"
#include "dawnplan/synthgen.hpp"
#include "test_support.hpp"

using namespace dawnplan;
using namespace dawnplan::testing;

TEST_CASE("load uni8 and tri4 fixtures") {
  const auto g = uni8();
  CHECK(g.size() == 8);
  CHECK(g.total_param_bytes() == 0);
  CHECK(g.node(0).t_f == 500);
  CHECK(g.node(7).m_a == kMiB);
  CHECK(tri4().size() == 4);
}

TEST_CASE("dangling consumer is rejected by name") {
  auto specs = chain_specs({{1, 1, 1}, {1, 1, 1}});
  specs[1].consumers.push_back("zz");
  try {
    ComputationGraph g("bad", specs);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("zz") != std::string::npos);
  }
}

TEST_CASE("cycles, duplicate ids and negative sizes are rejected") {
  auto specs = chain_specs({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
  auto cyc = specs;
  cyc[2].consumers.push_back("n1");
  CHECK_THROWS_AS(ComputationGraph("c", cyc), ValidationError);

  auto dup = specs;
  dup[1].id = "n1";
  CHECK_THROWS_AS(ComputationGraph("d", dup), ValidationError);

  auto neg = specs;
  neg[0].m_a = -1;
  CHECK_THROWS_AS(ComputationGraph("n", neg), ValidationError);
}

TEST_CASE("malformed json is a parse error") {
  CHECK_THROWS_AS(profile_from_json(nlohmann::json::parse(R"({"schema":1})")), ParseError);
  CHECK_THROWS_AS(profile_from_json(nlohmann::json::parse(R"([1,2])")), ParseError);
}

TEST_CASE("cumulative series on the fixtures") {
  const auto s = cumulative_series(uni8());
  REQUIRE(s.size() == 8);
  for (int i = 0; i < 8; ++i) {
    CHECK(s[i].cum_time == 1000 * (i + 1));
    CHECK(s[i].peak_mem == kMiB * (i + 1));
  }
  const auto t = cumulative_series(tri4());
  CHECK(t[0].peak_mem == 4 * kMiB);
  CHECK(t[1].peak_mem == 7 * kMiB);
  CHECK(t[2].peak_mem == 9 * kMiB);
  CHECK(t[3].peak_mem == 10 * kMiB);
}

TEST_CASE("allocate then release keeps the running peak") {
  const auto g = chain({{1, 1, 2 * kMiB, 0, 2 * kMiB},
                        {1, 1, 2 * kMiB, 0, 2 * kMiB},
                        {1, 1, 2 * kMiB, 0, 2 * kMiB}});
  for (const auto& p : cumulative_series(g)) {
    CHECK(p.cur_mem == 0);
    CHECK(p.peak_mem == 2 * kMiB);
  }
}

TEST_CASE("memory cdf") {
  CHECK(memory_cdf(uni8()).activation.p90 == doctest::Approx(kMiB));
  CHECK(memory_cdf(tri4()).consumed.max == doctest::Approx(4 * kMiB));
  const auto tf = gen_transformer_like(12, 42);
  CHECK(memory_cdf(tf).activation.p90 <= static_cast<double>(kTransformerActivationCap));
}

TEST_CASE("theorem condition flags") {
  SUBCASE("uniform chain meets every premise") {
    const auto r = check_theorem_conditions(uni8(), 2, 16 * kGiB);
    CHECK(r.compute_monotone);
    CHECK(r.memory_monotone);
    CHECK(r.comm_dominated);
    CHECK(r.memopt_evenly_distributed);
    CHECK(r.all());
  }
  SUBCASE("a large release breaks memory monotonicity") {
    auto specs = chain_specs({{500, 500, kMiB}, {500, 500, kMiB}, {500, 500, kMiB},
                              {500, 500, kMiB}, {500, 500, kMiB}});
    specs[3].m_d = 4 * kMiB;
    const auto r = check_theorem_conditions(ComputationGraph("dip", specs), 2, 16 * kGiB);
    CHECK_FALSE(r.memory_monotone);
    CHECK_FALSE(r.details.empty());
  }
  SUBCASE("a huge cross-cut tensor defeats comm dominance") {
    const auto g = chain({{2000, 2000, kMiB}, {2000, 2000, 10 * kGiB}, {2000, 2000, kMiB},
                          {2000, 2000, kMiB}});
    const auto r = check_theorem_conditions(g, 2, kGiB);
    CHECK_FALSE(r.comm_dominated);
  }
  CHECK_THROWS_AS(check_theorem_conditions(uni8(), 1, kGiB), DegenerateError);
}

TEST_CASE("canonical order is topological") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto g = random_graph(seed, 30);
    for (int i = 0; i < g.size(); ++i)
      for (int c : g.consumers(i)) CHECK(i < c);
  }
  const auto tf = gen_transformer_like(3, 5);
  for (int i = 0; i < tf.size(); ++i)
    for (int c : tf.consumers(i)) CHECK(i < c);
}

TEST_CASE("shuffled input order is canonicalized by depth, start and id") {
  auto specs = chain_specs({{1, 1, 1}, {2, 2, 2}, {3, 3, 3}, {4, 4, 4}});
  std::reverse(specs.begin(), specs.end());
  const ComputationGraph g("rev", specs);
  for (int i = 0; i < 4; ++i) CHECK(g.node(i).id == "n" + std::to_string(i + 1));

  // Same depth and start: the id decides.
  auto tie = chain_specs({{1, 1, 1}, {1, 1, 1}});
  tie[1].depth = 0;
  tie[1].fwd_start = 0;
  tie[0].consumers.clear();
  std::swap(tie[0], tie[1]);
  const ComputationGraph t("tie", tie);
  CHECK(t.node(0).id == "n1");
}

TEST_CASE("series peak is monotone and bounds the current memory") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = cumulative_series(random_graph(seed, 25));
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(s[i].peak_mem >= s[i].cur_mem);
      if (i > 0) CHECK(s[i].peak_mem >= s[i - 1].peak_mem);
    }
  }
}

TEST_CASE("save then load is the identity") {
  const auto dir = std::filesystem::temp_directory_path() / "dawnplan_roundtrip";
  std::filesystem::create_directories(dir);
  std::vector<ComputationGraph> graphs;
  graphs.push_back(uni8());
  graphs.push_back(gen_transformer_like(2, 3));
  graphs.push_back(gen_cnn_like(6, 9));
  for (std::uint64_t s = 1; s <= 5; ++s) graphs.push_back(random_graph(s, 20));
  for (const auto& g : graphs) {
    const auto path = dir / (g.name() + ".json");
    save_profile(g, path);
    const auto back = load_profile(path);
    CHECK(profile_to_json(back) == profile_to_json(g));
    CHECK(graph_hash(back) == graph_hash(g));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("transfer time rounds up") {
  CHECK(transfer_time(0, 1) == 0);
  CHECK(transfer_time(8 * kMiB, 8192LL * 1000000) == 1024);
  CHECK(transfer_time(1, 1000000) == 1);
  CHECK(transfer_time(3, 2000000) == 2);
  CHECK_THROWS_AS(transfer_time(1, 0), DegenerateError);
}
