// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dawnplan {

// Memory is accounted in bytes, time in microseconds, both as integers.
using Bytes = std::int64_t;
using Micros = std::int64_t;

inline constexpr Bytes kKiB = 1024;
inline constexpr Bytes kMiB = 1024 * kKiB;
inline constexpr Bytes kGiB = 1024 * kMiB;

// A tensor kept alive for the backward pass.
struct TensorRef {
  std::string id;
  Bytes size = 0;
  // Canonical indices, resolved at load time.
  int producer = -1;
  int backward_access = -1;
};

struct ProfiledNode {
  std::string id;
  int depth = 0;
  Micros fwd_start = 0;
  Micros t_f = 0;
  Micros t_b = 0;
  Bytes m_a = 0;  // activation memory produced
  Bytes m_p = 0;  // parameter + optimizer state owned
  Bytes m_d = 0;  // memory released after this node runs
  std::vector<TensorRef> saved;
  std::vector<std::string> consumers;
};

// Raw node description as it appears in a profile file, before the graph
// resolves ids into canonical indices.
struct NodeSpec {
  std::string id;
  int depth = 0;
  Micros fwd_start = 0;
  Micros t_f = 0;
  Micros t_b = 0;
  Bytes m_a = 0;
  Bytes m_p = 0;
  Bytes m_d = 0;
  std::vector<std::string> consumers;
  struct Saved {
    std::string tensor_id;
    Bytes size = 0;
    std::string last_backward_access;
    // Empty means "the node listing the tensor".
    std::string producer;
  };
  std::vector<Saved> saved;
};

// Immutable, validated, canonically ordered computation graph.
//
// Canonical order is depth ascending, then fwd_start ascending, then node id.
// Since every edge strictly increases depth this is a topological order.
class ComputationGraph {
 public:
  // Validates and canonicalizes. Throws ValidationError naming the node.
  ComputationGraph(std::string name, std::vector<NodeSpec> nodes);

  const std::string& name() const { return name_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const ProfiledNode& node(int i) const { return nodes_.at(i); }
  const std::vector<ProfiledNode>& nodes() const { return nodes_; }
  Bytes total_param_bytes() const { return total_param_bytes_; }

  // Canonical indices of data-flow successors / predecessors.
  const std::vector<int>& consumers(int i) const { return consumer_idx_.at(i); }
  const std::vector<int>& producers(int i) const { return producer_idx_.at(i); }

  // All saved tensors of the graph, any order; each carries its producer.
  const std::vector<TensorRef>& tensors() const { return tensors_; }
  // True when some saved tensor has node `i` as its producer.
  bool retained(int i) const { return retained_.at(i) != 0; }

  int index_of(const std::string& id) const;

  // Inverse of the constructor: the specs in canonical order.
  std::vector<NodeSpec> specs() const;

 private:
  std::string name_;
  std::vector<ProfiledNode> nodes_;
  std::vector<std::vector<int>> consumer_idx_;
  std::vector<std::vector<int>> producer_idx_;
  std::vector<TensorRef> tensors_;
  std::vector<char> retained_;
  std::map<std::string, int> index_;
  Bytes total_param_bytes_ = 0;
};

// ---- profile files -------------------------------------------------------

ComputationGraph profile_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const ComputationGraph& g);

ComputationGraph load_profile(const std::filesystem::path& path);
void save_profile(const ComputationGraph& g, const std::filesystem::path& path);

// FNV-1a over the canonical profile JSON. Identifies a graph inside plan files.
std::string graph_hash(const ComputationGraph& g);

// ---- series and statistics ----------------------------------------------

struct SeriesPoint {
  Micros cum_time = 0;  // sum of t_f + t_b up to this node
  Bytes cur_mem = 0;    // after the node's release
  Bytes peak_mem = 0;   // running maximum (taken before the release)
};

// Add m_a + m_p, record the peak, subtract m_d; one point per prefix.
std::vector<SeriesPoint> cumulative_series(const ComputationGraph& g);

// Same rule over canonical indices [lo, hi], starting from zero.
struct RangeMemory {
  Bytes peak = 0;
  int peak_index = -1;  // first node at which `peak` is reached
};
RangeMemory range_memory(const ComputationGraph& g, int lo, int hi,
                         bool include_params = true);

Micros range_time(const ComputationGraph& g, int lo, int hi);

struct Quantiles {
  double p50 = 0, p80 = 0, p90 = 0, p99 = 0, max = 0;
};

struct MemoryCdf {
  Quantiles activation;  // m_a
  Quantiles consumed;    // m_a + m_p - m_d, signed
};

// Nearest-rank quantiles.
Quantiles quantiles(std::vector<double> values);
MemoryCdf memory_cdf(const ComputationGraph& g);

// ---- ordering premises ---------------------------------------------------

struct ConditionOptions {
  double dip_tolerance = 0.9;  // cur_mem must stay above this * running peak
  double decile_ratio = 3.0;   // max/min swap-candidate bytes across deciles
};

struct TheoremConditionReport {
  bool compute_monotone = false;
  bool memory_monotone = false;
  bool comm_dominated = false;
  // Heuristic: the decile metric is one possible reading of "even".
  bool memopt_evenly_distributed = false;
  std::vector<std::string> details;

  bool all() const {
    return compute_monotone && memory_monotone && comm_dominated &&
           memopt_evenly_distributed;
  }
};

TheoremConditionReport check_theorem_conditions(const ComputationGraph& g,
                                                int stages,
                                                std::int64_t bandwidth_bps,
                                                const ConditionOptions& opts = {});

// Bytes of distinct activations produced at or before `cut` and consumed
// after it.
Bytes cut_bytes(const ComputationGraph& g, int cut);

// ceil(bytes / bandwidth) in microseconds; bandwidth in bytes per second.
Micros transfer_time(Bytes bytes, std::int64_t bandwidth_bps);

}  // namespace dawnplan
