// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dawnplan/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dawnplan/error.hpp"

namespace dawnplan {

using nlohmann::json;

namespace {

void require_nonneg(std::int64_t v, const char* what, const std::string& id) {
  if (v < 0) {
    throw ValidationError(
        "node '" + id + "': negative " + std::string(what) + " (" +
            std::to_string(v) + ")",
        id);
  }
}

// Kahn's algorithm over the id-level consumer relation. Throws on a cycle,
// naming one node that sits on it.
void check_acyclic(const std::vector<NodeSpec>& specs,
                   const std::map<std::string, int>& pos) {
  const int n = static_cast<int>(specs.size());
  std::vector<int> indeg(n, 0);
  for (const auto& s : specs)
    for (const auto& c : s.consumers) indeg[pos.at(c)]++;
  std::queue<int> ready;
  for (int i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push(i);
  int seen = 0;
  while (!ready.empty()) {
    int u = ready.front();
    ready.pop();
    ++seen;
    for (const auto& c : specs[u].consumers)
      if (--indeg[pos.at(c)] == 0) ready.push(pos.at(c));
  }
  if (seen != n) {
    for (int i = 0; i < n; ++i) {
      if (indeg[i] > 0) {
        throw ValidationError("cycle in consumer relation through node '" +
                                  specs[i].id + "'",
                              specs[i].id);
      }
    }
  }
}

}  // namespace

ComputationGraph::ComputationGraph(std::string name, std::vector<NodeSpec> specs)
    : name_(std::move(name)) {
  std::map<std::string, int> pos;
  for (int i = 0; i < static_cast<int>(specs.size()); ++i) {
    const auto& s = specs[i];
    if (s.id.empty()) throw ValidationError("node with empty id", s.id);
    if (!pos.emplace(s.id, i).second)
      throw ValidationError("duplicate node id '" + s.id + "'", s.id);
  }

  for (const auto& s : specs) {
    if (s.depth < 0)
      throw ValidationError("node '" + s.id + "': negative depth", s.id);
    require_nonneg(s.fwd_start, "fwd_start_us", s.id);
    require_nonneg(s.t_f, "t_f_us", s.id);
    require_nonneg(s.t_b, "t_b_us", s.id);
    require_nonneg(s.m_a, "m_a_bytes", s.id);
    require_nonneg(s.m_p, "m_p_bytes", s.id);
    require_nonneg(s.m_d, "m_d_bytes", s.id);
    for (const auto& c : s.consumers) {
      if (!pos.count(c)) {
        throw ValidationError(
            "node '" + s.id + "': unknown consumer '" + c + "'", c);
      }
    }
  }
  check_acyclic(specs, pos);

  for (const auto& s : specs) {
    for (const auto& c : s.consumers) {
      const auto& cs = specs[pos.at(c)];
      if (cs.depth <= s.depth) {
        throw ValidationError("edge '" + s.id + "' -> '" + c +
                                  "' does not increase depth",
                              c);
      }
    }
  }

  std::sort(specs.begin(), specs.end(), [](const NodeSpec& a, const NodeSpec& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    if (a.fwd_start != b.fwd_start) return a.fwd_start < b.fwd_start;
    return a.id < b.id;
  });

  const int n = static_cast<int>(specs.size());
  for (int i = 0; i < n; ++i) index_[specs[i].id] = i;
  nodes_.resize(n);
  consumer_idx_.assign(n, {});
  producer_idx_.assign(n, {});
  retained_.assign(n, 0);

  std::set<std::string> tensor_ids;
  std::vector<Bytes> saved_by_producer(n, 0);
  for (int i = 0; i < n; ++i) {
    auto& s = specs[i];
    auto& node = nodes_[i];
    node.id = s.id;
    node.depth = s.depth;
    node.fwd_start = s.fwd_start;
    node.t_f = s.t_f;
    node.t_b = s.t_b;
    node.m_a = s.m_a;
    node.m_p = s.m_p;
    node.m_d = s.m_d;
    node.consumers = s.consumers;
    total_param_bytes_ += s.m_p;
    for (const auto& c : s.consumers) {
      int j = index_.at(c);
      consumer_idx_[i].push_back(j);
      producer_idx_[j].push_back(i);
    }
    for (const auto& sv : s.saved) {
      if (sv.tensor_id.empty())
        throw ValidationError("node '" + s.id + "': saved tensor without id", s.id);
      if (!tensor_ids.insert(sv.tensor_id).second) {
        throw ValidationError("node '" + s.id + "': duplicate tensor id '" +
                                  sv.tensor_id + "'",
                              s.id);
      }
      if (sv.size <= 0) {
        throw ValidationError("node '" + s.id + "': tensor '" + sv.tensor_id +
                                  "' has non-positive size",
                              s.id);
      }
      const std::string& prod_id = sv.producer.empty() ? s.id : sv.producer;
      auto pit = index_.find(prod_id);
      if (pit == index_.end()) {
        throw ValidationError("tensor '" + sv.tensor_id + "': unknown producer '" +
                                  prod_id + "'",
                              prod_id);
      }
      auto ait = index_.find(sv.last_backward_access);
      if (ait == index_.end()) {
        throw ValidationError("tensor '" + sv.tensor_id +
                                  "': unknown backward access node '" +
                                  sv.last_backward_access + "'",
                              sv.last_backward_access);
      }
      TensorRef t;
      t.id = sv.tensor_id;
      t.size = sv.size;
      t.producer = pit->second;
      t.backward_access = ait->second;
      if (t.backward_access < t.producer) {
        throw ValidationError("tensor '" + t.id + "': backward access node '" +
                                  sv.last_backward_access +
                                  "' precedes its producer",
                              sv.last_backward_access);
      }
      saved_by_producer[t.producer] += t.size;
      retained_[t.producer] = 1;
      node.saved.push_back(t);
      tensors_.push_back(t);
    }
  }
  for (int i = 0; i < n; ++i) {
    std::sort(consumer_idx_[i].begin(), consumer_idx_[i].end());
    std::sort(producer_idx_[i].begin(), producer_idx_[i].end());
    // Saved tensors are carved out of the producer's activation.
    if (saved_by_producer[i] > nodes_[i].m_a) {
      throw ValidationError("node '" + nodes_[i].id +
                                "': saved tensors exceed its activation bytes",
                            nodes_[i].id);
    }
  }
}

int ComputationGraph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("unknown node '" + id + "'", id);
  return it->second;
}

std::vector<NodeSpec> ComputationGraph::specs() const {
  std::vector<NodeSpec> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) {
    NodeSpec s;
    s.id = n.id;
    s.depth = n.depth;
    s.fwd_start = n.fwd_start;
    s.t_f = n.t_f;
    s.t_b = n.t_b;
    s.m_a = n.m_a;
    s.m_p = n.m_p;
    s.m_d = n.m_d;
    s.consumers = n.consumers;
    for (const auto& t : n.saved) {
      NodeSpec::Saved sv;
      sv.tensor_id = t.id;
      sv.size = t.size;
      sv.last_backward_access = nodes_[t.backward_access].id;
      if (nodes_[t.producer].id != n.id) sv.producer = nodes_[t.producer].id;
      s.saved.push_back(std::move(sv));
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---- JSON ----------------------------------------------------------------

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ParseError(where + ": unknown field '" + k + "'");
  }
}

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
  const auto& v = obj.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer())
      throw ParseError(where + ": field '" + key + "' must be an integer");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string())
      throw ParseError(where + ": field '" + key + "' must be a string");
  }
  return v.get<T>();
}

}  // namespace

ComputationGraph profile_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("profile: top level must be an object");
  reject_unknown(j, {"schema", "name", "nodes"}, "profile");
  if (get_field<int>(j, "schema", "profile") != 1)
    throw ParseError("profile: unsupported schema version");
  auto name = get_field<std::string>(j, "name", "profile");
  if (!j.contains("nodes") || !j["nodes"].is_array())
    throw ParseError("profile: 'nodes' must be an array");

  std::vector<NodeSpec> specs;
  for (const auto& jn : j["nodes"]) {
    if (!jn.is_object()) throw ParseError("profile: node must be an object");
    std::string where = "node";
    if (jn.contains("id") && jn["id"].is_string())
      where = "node '" + jn["id"].get<std::string>() + "'";
    reject_unknown(jn,
                   {"id", "depth", "fwd_start_us", "t_f_us", "t_b_us",
                    "m_a_bytes", "m_p_bytes", "m_d_bytes", "consumers", "saved"},
                   where);
    NodeSpec s;
    s.id = get_field<std::string>(jn, "id", where);
    s.depth = get_field<int>(jn, "depth", where);
    s.fwd_start = get_field<Micros>(jn, "fwd_start_us", where);
    s.t_f = get_field<Micros>(jn, "t_f_us", where);
    s.t_b = get_field<Micros>(jn, "t_b_us", where);
    s.m_a = get_field<Bytes>(jn, "m_a_bytes", where);
    s.m_p = get_field<Bytes>(jn, "m_p_bytes", where);
    s.m_d = get_field<Bytes>(jn, "m_d_bytes", where);
    if (!jn.contains("consumers") || !jn["consumers"].is_array())
      throw ParseError(where + ": 'consumers' must be an array");
    for (const auto& c : jn["consumers"]) {
      if (!c.is_string()) throw ParseError(where + ": consumer ids must be strings");
      s.consumers.push_back(c.get<std::string>());
    }
    if (!jn.contains("saved") || !jn["saved"].is_array())
      throw ParseError(where + ": 'saved' must be an array");
    for (const auto& js : jn["saved"]) {
      if (!js.is_object()) throw ParseError(where + ": saved entry must be an object");
      reject_unknown(js, {"tensor_id", "size_bytes", "last_backward_access", "producer"},
                     where + " saved tensor");
      NodeSpec::Saved sv;
      sv.tensor_id = get_field<std::string>(js, "tensor_id", where);
      sv.size = get_field<Bytes>(js, "size_bytes", where);
      sv.last_backward_access = get_field<std::string>(js, "last_backward_access", where);
      if (js.contains("producer")) sv.producer = get_field<std::string>(js, "producer", where);
      s.saved.push_back(std::move(sv));
    }
    specs.push_back(std::move(s));
  }
  return ComputationGraph(std::move(name), std::move(specs));
}

json profile_to_json(const ComputationGraph& g) {
  json nodes = json::array();
  for (const auto& s : g.specs()) {
    json saved = json::array();
    for (const auto& sv : s.saved) {
      json t = {{"tensor_id", sv.tensor_id},
                {"size_bytes", sv.size},
                {"last_backward_access", sv.last_backward_access}};
      if (!sv.producer.empty()) t["producer"] = sv.producer;
      saved.push_back(std::move(t));
    }
    nodes.push_back({{"id", s.id},
                     {"depth", s.depth},
                     {"fwd_start_us", s.fwd_start},
                     {"t_f_us", s.t_f},
                     {"t_b_us", s.t_b},
                     {"m_a_bytes", s.m_a},
                     {"m_p_bytes", s.m_p},
                     {"m_d_bytes", s.m_d},
                     {"consumers", s.consumers},
                     {"saved", std::move(saved)}});
  }
  return {{"schema", 1}, {"name", g.name()}, {"nodes", std::move(nodes)}};
}

ComputationGraph load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("profile '" + path.string() + "': " + e.what());
  }
  return profile_from_json(j);
}

void save_profile(const ComputationGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write profile '" + path.string() + "'");
  out << profile_to_json(g).dump(2) << '\n';
}

std::string graph_hash(const ComputationGraph& g) {
  const std::string text = profile_to_json(g).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- series --------------------------------------------------------------

std::vector<SeriesPoint> cumulative_series(const ComputationGraph& g) {
  std::vector<SeriesPoint> out;
  out.reserve(g.size());
  Micros t = 0;
  Bytes cur = 0, peak = 0;
  for (const auto& n : g.nodes()) {
    t += n.t_f + n.t_b;
    cur += n.m_a + n.m_p;
    peak = std::max(peak, cur);
    cur -= n.m_d;
    out.push_back({t, cur, peak});
  }
  return out;
}

RangeMemory range_memory(const ComputationGraph& g, int lo, int hi,
                         bool include_params) {
  RangeMemory r;
  Bytes cur = 0;
  for (int i = lo; i <= hi; ++i) {
    const auto& n = g.node(i);
    cur += n.m_a + (include_params ? n.m_p : 0);
    if (r.peak_index < 0 || cur > r.peak) {
      r.peak = cur;
      r.peak_index = i;
    }
    cur -= n.m_d;
  }
  return r;
}

Micros range_time(const ComputationGraph& g, int lo, int hi) {
  Micros t = 0;
  for (int i = lo; i <= hi; ++i) t += g.node(i).t_f + g.node(i).t_b;
  return t;
}

Quantiles quantiles(std::vector<double> v) {
  Quantiles q;
  if (v.empty()) return q;
  std::sort(v.begin(), v.end());
  auto rank = [&](double p) {
    auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
    k = std::clamp<std::size_t>(k, 1, v.size());
    return v[k - 1];
  };
  q.p50 = rank(0.50);
  q.p80 = rank(0.80);
  q.p90 = rank(0.90);
  q.p99 = rank(0.99);
  q.max = v.back();
  return q;
}

MemoryCdf memory_cdf(const ComputationGraph& g) {
  std::vector<double> act, consumed;
  for (const auto& n : g.nodes()) {
    act.push_back(static_cast<double>(n.m_a));
    consumed.push_back(static_cast<double>(n.m_a + n.m_p - n.m_d));
  }
  return {quantiles(std::move(act)), quantiles(std::move(consumed))};
}

Micros transfer_time(Bytes bytes, std::int64_t bandwidth_bps) {
  if (bytes <= 0) return 0;
  if (bandwidth_bps <= 0) throw DegenerateError("bandwidth must be positive");
  __int128 num = static_cast<__int128>(bytes) * 1000000;
  __int128 q = (num + bandwidth_bps - 1) / bandwidth_bps;
  return static_cast<Micros>(q);
}

Bytes cut_bytes(const ComputationGraph& g, int cut) {
  Bytes total = 0;
  for (int u = 0; u <= cut; ++u) {
    const auto& cs = g.consumers(u);
    if (!cs.empty() && cs.back() > cut) total += g.node(u).m_a;
  }
  return total;
}

}  // namespace dawnplan
