// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "dawnplan/graph.hpp"
#include "dawnplan/partitioner.hpp"

namespace dawnplan {

// Chain of n identical nodes; every activation is saved for its own backward.
ComputationGraph gen_uniform(int n, Micros t_each, Bytes m_each);

// Activation sizes above this are rare in the transformer-like generator.
inline constexpr Bytes kTransformerActivationCap = 16 * kMiB;

// Blocks of 12 attention/MLP sub-ops whose time tracks memory within +-15%,
// framed by an embedding whose output is reused by the final head.
ComputationGraph gen_transformer_like(int layers, std::uint64_t seed);

// Alternating conv-like (slow, small output) and norm-like (fast, large
// output) nodes with pooling releases. Early layers carry the large feature
// maps, late layers the compute and parameters.
ComputationGraph gen_cnn_like(int layers, std::uint64_t seed);

// Four-stage GPT-2-like chain with stage times matching a measured
// memory-balanced partition and a compute-balanced one whose stages pay for
// recomputation.
struct ScenarioInstance {
  ComputationGraph graph;
  PlanConfig config;
  PartitionPlan memory_balanced;
  PartitionPlan compute_balanced_recompute;
};

ScenarioInstance gpt2_like_scenario();

// Pearson correlation between node t_f + t_b and m_a.
double time_memory_correlation(const ComputationGraph& g);

}  // namespace dawnplan
