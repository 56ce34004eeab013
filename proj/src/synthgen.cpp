// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dawnplan/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dawnplan/balance.hpp"
#include "dawnplan/error.hpp"
#include "dawnplan/memopt.hpp"

namespace dawnplan {

namespace {

// Nodes are appended in execution order; edges only point forward.
class Builder {
 public:
  int add(std::string id, Micros t_f, Micros t_b, Bytes m_a, Bytes m_p = 0, Bytes m_d = 0) {
    NodeSpec n;
    n.id = std::move(id);
    n.t_f = t_f;
    n.t_b = t_b;
    n.m_a = m_a;
    n.m_p = m_p;
    n.m_d = m_d;
    specs_.push_back(std::move(n));
    return static_cast<int>(specs_.size()) - 1;
  }
  void edge(int from, int to) { specs_[from].consumers.push_back(specs_[to].id); }
  void save(int node, Bytes size) {
    specs_[node].saved.push_back({specs_[node].id + ".out", size, specs_[node].id, ""});
  }
  NodeSpec& operator[](int i) { return specs_[i]; }

  ComputationGraph build(std::string name) {
    std::vector<int> depth(specs_.size(), 0);
    std::map<std::string, int> idx;
    for (std::size_t i = 0; i < specs_.size(); ++i) idx[specs_[i].id] = static_cast<int>(i);
    Micros t = 0;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      specs_[i].depth = depth[i];
      specs_[i].fwd_start = t;
      t += specs_[i].t_f;
      for (const auto& c : specs_[i].consumers)
        depth[idx[c]] = std::max(depth[idx[c]], depth[i] + 1);
    }
    return ComputationGraph(std::move(name), std::move(specs_));
  }

 private:
  std::vector<NodeSpec> specs_;
};

// Uniform in [1 - spread, 1 + spread], built from raw engine output so the
// sequence does not depend on the standard library's distributions.
class Jitter {
 public:
  explicit Jitter(std::uint64_t seed) : rng_(seed) {}
  double operator()(double spread) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return 1.0 + spread * (2.0 * u - 1.0);
  }

 private:
  std::mt19937_64 rng_;
};

std::int64_t scaled(double base, double f) { return std::llround(base * f); }

}  // namespace

ComputationGraph gen_uniform(int n, Micros t_each, Bytes m_each) {
  if (n < 2) throw DegenerateError("gen_uniform needs at least 2 nodes");
  if (t_each < 0 || m_each < 0) throw DegenerateError("gen_uniform: negative size");
  Builder b;
  for (int i = 0; i < n; ++i) {
    const int id = b.add("n" + std::to_string(i + 1), t_each / 2, t_each - t_each / 2, m_each);
    if (m_each > 0) b.save(id, m_each);
    if (i > 0) b.edge(id - 1, id);
  }
  return b.build("uniform" + std::to_string(n));
}

ComputationGraph gen_transformer_like(int layers, std::uint64_t seed) {
  if (layers < 2) throw DegenerateError("gen_transformer_like needs at least 2 layers");
  Jitter jit(seed);
  Builder b;
  // Per-op activation size in MiB, parameter size in MiB, and whether the
  // output is kept for backward.
  struct OpKind {
    const char* name;
    double mem;
    double params;
    bool saved;
  };
  static const OpKind kBlock[12] = {
      {"ln1", 4, 0, true},       {"qkv", 12, 3, true},  {"score", 24, 0, true},
      {"softmax", 12, 0, true},  {"ctx", 4, 0, true},   {"proj", 4, 1, true},
      {"res1", 4, 0, false},     {"ln2", 4, 0, true},   {"fc1", 14, 4, true},
      {"gelu", 14, 0, false},    {"fc2", 4, 4, true},   {"res2", 4, 0, false},
  };
  constexpr double kMicrosPerMiB = 10.0;

  auto node = [&](const std::string& id, double mem_mib, double params_mib, bool saved) {
    const Bytes m_a = scaled(mem_mib * kMiB, jit(0.05));
    const Micros t = scaled(mem_mib * kMicrosPerMiB, jit(0.15));
    const int i = b.add(id, t / 3, t - t / 3, m_a, scaled(params_mib * kMiB, 1.0));
    if (saved) b.save(i, m_a);
    return i;
  };

  const int embed = node("embed", 8, 6, true);
  int prev = embed;
  for (int l = 0; l < layers; ++l) {
    const int block_in = prev;
    int res1 = -1, gelu = -1;
    for (int k = 0; k < 12; ++k) {
      const auto& op = kBlock[k];
      const int i = node("l" + std::to_string(l) + "." + op.name, op.mem, op.params, op.saved);
      b.edge(prev, i);
      if (k == 6) {
        b.edge(block_in, i);  // residual
        res1 = i;
      }
      if (k == 9) gelu = i;
      if (k == 10) b[i].m_d = b[gelu].m_a;  // gelu output is not kept
      if (k == 11) b.edge(res1, i);
      prev = i;
    }
  }
  const int head = node("head", 12, 0, true);
  b.edge(prev, head);
  b.edge(embed, head);  // tied embedding weights
  return b.build("transformer" + std::to_string(layers) + "_s" + std::to_string(seed));
}

ComputationGraph gen_cnn_like(int layers, std::uint64_t seed) {
  if (layers < 2) throw DegenerateError("gen_cnn_like needs at least 2 layers");
  Jitter jit(seed);
  Builder b;
  int prev = -1;
  Bytes workspace = 0;
  for (int l = 0; l < layers; ++l) {
    const double p = static_cast<double>(l) / (layers - 1);
    // Feature maps shrink with depth while per-layer compute and weights grow.
    const double fmap = 16.0 * (1.3 - 0.8 * p);
    const std::string tag = "l" + std::to_string(l);

    const Bytes conv_out = scaled(fmap * kMiB / 8, jit(0.2));
    const Bytes conv_ws = scaled(fmap * kMiB / 16, jit(0.2));
    const Micros conv_t = scaled(400.0 * (0.4 + 1.6 * p), jit(0.2));
    const int conv = b.add(tag + ".conv", conv_t / 3, conv_t - conv_t / 3, conv_out + conv_ws,
                           scaled(kMiB * (0.25 + 4.0 * p * p), jit(0.1)));
    b.save(conv, conv_out);
    workspace += conv_ws;
    if (prev >= 0) b.edge(prev, conv);

    const Bytes bn_out = scaled(fmap * kMiB, jit(0.2));
    const Micros bn_t = scaled(5.0 * fmap, jit(0.3));
    const int bn = b.add(tag + ".bn", bn_t / 3, bn_t - bn_t / 3, bn_out);
    b.save(bn, bn_out);
    b.edge(conv, bn);
    prev = bn;

    if (l % 4 == 3 && l + 1 < layers) {
      const Micros pool_t = scaled(20.0, jit(0.3));
      const int pool = b.add(tag + ".pool", pool_t / 2, pool_t - pool_t / 2,
                             scaled(fmap * kMiB / 4, 1.0), 0, workspace);
      b.edge(prev, pool);
      workspace = 0;
      prev = pool;
    }
  }
  return b.build("cnn" + std::to_string(layers) + "_s" + std::to_string(seed));
}

ScenarioInstance gpt2_like_scenario() {
  // Node times per segment between consecutive boundaries of the two
  // partitions. A nonzero second entry marks a node whose recomputation
  // costs that much.
  struct Seg {
    std::vector<std::pair<Micros, Micros>> nodes;
    int mem_stage;  // 0-based stage under the memory-balanced plan
  };
  const std::vector<Seg> segs = {
      {{{14552, 0}, {14552, 0}}, 0},
      {{{60000, 20000}, {20000, 0}}, 1},
      {{{7786, 0}}, 2},
      {{{30000, 10000}, {50000, 0}, {47615, 0}}, 2},
      {{{2385, 0}}, 3},
      {{{15000, 5000}, {60000, 0}, {63000, 0}}, 3},
      {{{48630, 0}, {48630, 0}, {48630, 0}}, 3},
  };
  // Peak share per memory-balanced stage follows 1/(l-x+1) for l = 4.
  const Bytes unit = 4 * kMiB;
  const Bytes stage_mem[4] = {3 * unit, 4 * unit, 6 * unit, 12 * unit};
  int per_stage[4] = {0, 0, 0, 0};
  for (const auto& s : segs) per_stage[s.mem_stage] += static_cast<int>(s.nodes.size());

  Builder b;
  int prev = -1, k = 0, seen[4] = {0, 0, 0, 0};
  std::vector<std::string> recompute_ids;
  for (const auto& s : segs) {
    for (auto [t, rc] : s.nodes) {
      const int x = s.mem_stage;
      Bytes m = stage_mem[x] / per_stage[x];
      if (++seen[x] == per_stage[x]) m = stage_mem[x] - m * (per_stage[x] - 1);
      const Micros t_f = rc > 0 ? rc : t / 3;
      const int i = b.add("op" + std::to_string(++k), t_f, t - t_f, m);
      b.save(i, m);
      if (prev >= 0) b.edge(prev, i);
      if (rc > 0) recompute_ids.push_back(b[i].id + ".out");
      prev = i;
    }
  }
  ComputationGraph g = b.build("gpt2_like_chain");

  PlanConfig cfg;
  cfg.stages = 4;
  cfg.schedule = Schedule::kAsync1F1B;
  cfg.capacity = kGiB;
  cfg.bandwidth_bps = 16 * kGiB;

  const Cut mem_cuts = memory_balanced_1f1b(g, 4);
  PartitionPlan mem = assemble_plan(g, cfg, mem_cuts, std::vector<MemOptPlan>(4));

  // Compute-balanced boundaries after the 5th, 9th and 12th nodes.
  const Cut comp_cuts{{4, 8, 11}};
  std::vector<MemOptPlan> memopt(4);
  const auto ranges = stage_ranges(comp_cuts, g.size());
  for (int x = 0; x < 4; ++x) {
    const auto tl = build_timeline(g, ranges[x]);
    const auto cands = collect_candidates(g, tl, cfg.bandwidth_bps);
    for (const auto& rc : cands.recomputes) {
      if (std::find(recompute_ids.begin(), recompute_ids.end(), rc.tensor.id) ==
          recompute_ids.end())
        continue;
      MemOptAction a;
      a.kind = MemOptAction::Kind::kRecompute;
      a.tensor = rc.tensor.id;
      a.size = rc.tensor.size;
      a.overhead = rc.recompute_time;
      auto& p = memopt[x];
      p.actions.push_back(a);
      p.bytes_saved += a.size;
      p.added_time += a.overhead;
      p.effective_saved = range_memory(g, ranges[x].lo, ranges[x].hi).peak -
                          peak_after_removal(g, ranges[x], {rc.tensor});
    }
  }
  PartitionPlan comp = assemble_plan(g, cfg, comp_cuts, memopt);
  return {std::move(g), cfg, std::move(mem), std::move(comp)};
}

double time_memory_correlation(const ComputationGraph& g) {
  const int n = g.size();
  double st = 0, sm = 0;
  for (const auto& v : g.nodes()) {
    st += static_cast<double>(v.t_f + v.t_b);
    sm += static_cast<double>(v.m_a);
  }
  const double mt = st / n, mm = sm / n;
  double cov = 0, vt = 0, vm = 0;
  for (const auto& v : g.nodes()) {
    const double dt = static_cast<double>(v.t_f + v.t_b) - mt;
    const double dm = static_cast<double>(v.m_a) - mm;
    cov += dt * dm;
    vt += dt * dt;
    vm += dm * dm;
  }
  if (vt == 0 || vm == 0) return 0;
  return cov / std::sqrt(vt * vm);
}

}  // namespace dawnplan
