// Copyright 2026 The dawnplan Authors.
// SPDX-License-Identifier: Apache-2.0

// dawnplan command-line tool. Machine output goes to stdout, diagnostics to
// stderr.

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dawnplan/balance.hpp"
#include "dawnplan/error.hpp"
#include "dawnplan/graph.hpp"
#include "dawnplan/oracle.hpp"
#include "dawnplan/partitioner.hpp"
#include "dawnplan/simulator.hpp"
#include "dawnplan/synthgen.hpp"

namespace dp = dawnplan;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitTooLarge = 3;
constexpr int kExitNotContained = 4;

// "512", "64K", "1.5G", "16GiB" -> bytes (powers of 1024).
std::int64_t parse_size(const std::string& text) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw dp::ParseError("bad size '" + text + "'");
  }
  std::string suffix = text.substr(pos);
  for (auto& c : suffix) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (suffix.size() > 1 && (suffix.ends_with("IB") || suffix.ends_with("B")))
    suffix = suffix.substr(0, 1);
  double mult = 1;
  if (suffix.empty() || suffix == "B") mult = 1;
  else if (suffix == "K") mult = 1024.0;
  else if (suffix == "M") mult = 1024.0 * 1024;
  else if (suffix == "G") mult = 1024.0 * 1024 * 1024;
  else if (suffix == "T") mult = 1024.0 * 1024 * 1024 * 1024;
  else throw dp::ParseError("bad size suffix in '" + text + "'");
  if (v < 0) throw dp::ParseError("negative size '" + text + "'");
  return static_cast<std::int64_t>(std::llround(v * mult));
}

std::string ms(double us) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << us / 1000.0 << " ms";
  return os.str();
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw dp::Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dp::ParseError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw dp::ParseError(path + ": " + e.what());
  }
}

std::string cuts_text(const dp::Cut& c) {
  std::string s;
  for (int p : c.positions) s += (s.empty() ? "" : ",") + std::to_string(p);
  return s;
}

struct PlanArgs {
  std::string file;
  int stages = 2;
  std::string schedule = "async";
  std::string capacity = "16G";
  std::string bandwidth = "16G";
  double comm_cap = 0.5;
  int micro_batches = 0;
  int jobs = 0;
  std::string out;

  void add(CLI::App* cmd, bool with_stages = true) {
    cmd->add_option("file", file, "profile JSON")->required();
    if (with_stages) cmd->add_option("--stages,-l", stages, "pipeline stages")->check(CLI::Range(2, 32));
    cmd->add_option("--schedule", schedule, "sync or async (1F1B)")
        ->check(CLI::IsMember({"sync", "async", "1f1b", "async_1f1b"}));
    cmd->add_option("--capacity", capacity, "device memory, K/M/G suffixes");
    cmd->add_option("--bandwidth", bandwidth, "inter-stage bandwidth, bytes/s");
    cmd->add_option("--comm-cap", comm_cap, "max comm time as a fraction of stage time");
    cmd->add_option("--micro-batches,-m", micro_batches, "micro-batches (0: default)");
    cmd->add_option("--jobs,-j", jobs, "worker threads (0: all cores)");
  }

  dp::PlanConfig config() const {
    dp::PlanConfig c;
    c.stages = stages;
    c.schedule = dp::schedule_from_string(schedule);
    c.capacity = parse_size(capacity);
    c.bandwidth_bps = parse_size(bandwidth);
    c.comm_cap = comm_cap;
    c.micro_batches = micro_batches;
    c.jobs = jobs > 0 ? jobs : std::max(1u, std::thread::hardware_concurrency());
    return c;
  }
};

int cmd_gen(const std::string& kind, int layers, std::uint64_t seed, std::int64_t t_each,
            const std::string& m_each, const std::string& out) {
  if (const char* env = std::getenv("DAWNPLAN_SEED")) {
    try {
      seed = std::stoull(env);
    } catch (const std::exception&) {
      throw dp::ParseError(std::string("DAWNPLAN_SEED is not an integer: ") + env);
    }
  }
  auto g = kind == "uniform"       ? dp::gen_uniform(layers, t_each, parse_size(m_each))
           : kind == "transformer" ? dp::gen_transformer_like(layers, seed)
                                   : dp::gen_cnn_like(layers, seed);
  write_json(dp::profile_to_json(g), out);
  std::cerr << "generated " << g.name() << ": " << g.size() << " nodes\n";
  return kExitOk;
}

int cmd_stats(const PlanArgs& a, bool as_json) {
  const auto g = dp::load_profile(a.file);
  const auto cdf = dp::memory_cdf(g);
  const auto rep = dp::check_theorem_conditions(g, a.stages, parse_size(a.bandwidth));
  auto q = [](const dp::Quantiles& x) {
    return json{{"p50", x.p50}, {"p80", x.p80}, {"p90", x.p90}, {"p99", x.p99}, {"max", x.max}};
  };
  if (as_json) {
    std::cout << json{{"graph", g.name()},
                      {"nodes", g.size()},
                      {"total_param_bytes", g.total_param_bytes()},
                      {"activation_bytes", q(cdf.activation)},
                      {"consumed_bytes", q(cdf.consumed)},
                      {"conditions",
                       {{"compute_monotone", rep.compute_monotone},
                        {"memory_monotone", rep.memory_monotone},
                        {"comm_dominated", rep.comm_dominated},
                        {"memopt_evenly_distributed", rep.memopt_evenly_distributed},
                        {"details", rep.details}}}}
                     .dump(2)
              << '\n';
    return kExitOk;
  }
  auto mib = [](double b) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << b / dp::kMiB;
    return os.str();
  };
  std::cout << g.name() << ": " << g.size() << " nodes, params " << mib(g.total_param_bytes())
            << " MiB\n\n";
  std::cout << "series      p50      p80      p90      p99      max   (MiB)\n";
  for (auto [name, x] : {std::pair{"m_a     ", cdf.activation}, {"consumed", cdf.consumed}}) {
    std::cout << name;
    for (double v : {x.p50, x.p80, x.p90, x.p99, x.max}) std::cout << std::setw(9) << mib(v);
    std::cout << '\n';
  }
  std::cout << "\nconditions (l=" << a.stages << ")\n"
            << "  compute_monotone          " << rep.compute_monotone << '\n'
            << "  memory_monotone           " << rep.memory_monotone << '\n'
            << "  comm_dominated            " << rep.comm_dominated << '\n'
            << "  memopt_evenly_distributed " << rep.memopt_evenly_distributed
            << " (heuristic)\n";
  for (const auto& d : rep.details) std::cout << "  - " << d << '\n';
  return kExitOk;
}

int cmd_plan(const PlanArgs& a) {
  const auto g = dp::load_profile(a.file);
  const auto p = dp::plan(g, a.config());
  write_json(dp::plan_to_json(p), a.out);
  std::cerr << "cuts [" << cuts_text(p.cuts) << "], bottleneck " << ms(p.bottleneck) << '\n';
  return kExitOk;
}

int cmd_oracle(const PlanArgs& a, bool exhaustive_memopt) {
  const auto g = dp::load_profile(a.file);
  const auto p = dp::exhaustive_plan(g, a.config(), {exhaustive_memopt});
  write_json(dp::plan_to_json(p), a.out);
  std::cerr << "oracle cuts [" << cuts_text(p.cuts) << "], bottleneck " << ms(p.bottleneck)
            << '\n';
  return kExitOk;
}

int cmd_verify(const PlanArgs& a) {
  const auto g = dp::load_profile(a.file);
  const auto v = dp::verify_theorem(g, a.config());
  std::cout << dp::verification_to_json(v).dump(2) << '\n';
  if (!v.conditions.all()) std::cerr << "conditions not met; containment not asserted\n";
  if (!v.holds()) {
    std::cerr << "optimal cut " << v.optimal_cut << " outside [" << v.pair.lo() << ","
              << v.pair.hi() << "]\n";
    return kExitNotContained;
  }
  return kExitOk;
}

int cmd_simulate(const std::string& plan_file, const std::string& graph_file, int m,
                 const std::string& bandwidth, const std::string& trace) {
  const auto p = dp::plan_from_json(read_json(plan_file));
  const auto g = dp::load_profile(graph_file);
  dp::SimConfig cfg;
  cfg.schedule = p.config.schedule;
  cfg.micro_batches = m > 0 ? m : p.config.effective_micro_batches();
  cfg.bandwidth_bps = bandwidth.empty() ? p.config.bandwidth_bps : parse_size(bandwidth);
  cfg.capacity = p.config.capacity;
  const auto rep = dp::simulate(p, g, cfg);
  if (!trace.empty()) {
    std::ofstream out(trace);
    if (!out) throw dp::Error("cannot write " + trace);
    dp::write_trace_csv(rep, out);
  }
  std::cout << dp::report_to_json(rep).dump(2) << '\n';
  for (std::size_t x = 0; x < rep.capacity_exceeded.size(); ++x)
    if (rep.capacity_exceeded[x]) std::cerr << "warning: stage " << x + 1 << " exceeds capacity\n";
  std::cerr << "iteration " << ms(rep.iteration_time) << ", bubble " << rep.bubble_ratio
            << ", waste " << rep.waste_ratio << '\n';
  return kExitOk;
}

int cmd_compare(const PlanArgs& a, bool as_json) {
  const auto g = dp::load_profile(a.file);
  const auto cfg = a.config();
  dp::SimConfig sc;
  sc.schedule = cfg.schedule;
  sc.micro_batches = cfg.effective_micro_batches();
  sc.bandwidth_bps = cfg.bandwidth_bps;
  sc.capacity = cfg.capacity;

  json rows = json::array();
  auto add = [&](const std::string& name, const dp::PartitionPlan& p) {
    const auto r = dp::simulate(p, g, sc);
    bool fits = true;
    for (char c : r.capacity_exceeded) fits = fits && !c;
    rows.push_back({{"strategy", name},
                    {"cuts", p.cuts.positions},
                    {"bottleneck_us", p.bottleneck},
                    {"iteration_time_us", r.iteration_time},
                    {"waste_ratio", r.waste_ratio},
                    {"max_peak_bytes", *std::max_element(r.per_stage_peak.begin(),
                                                         r.per_stage_peak.end())},
                    {"fits", fits}});
  };
  const std::vector<dp::MemOptPlan> none(cfg.stages);
  add("compute-balanced",
      dp::assemble_plan(g, cfg,
                        dp::compute_balanced(g, {0, g.size() - 1},
                                             std::vector<std::int64_t>(cfg.stages, 1)),
                        none));
  const auto mb = cfg.schedule == dp::Schedule::kSync ? dp::memory_balanced_sync(g, cfg.stages)
                                                      : dp::memory_balanced_1f1b(g, cfg.stages);
  add("memory-balanced", dp::assemble_plan(g, cfg, mb, none));
  try {
    add("planner", dp::plan(g, cfg));
  } catch (const dp::InfeasibleError& e) {
    std::cerr << "planner: " << e.what() << '\n';
  }

  if (as_json) {
    std::cout << json{{"graph", g.name()}, {"rows", rows}}.dump(2) << '\n';
    return kExitOk;
  }
  std::cout << std::left << std::setw(18) << "strategy" << std::setw(16) << "cuts"
            << std::setw(14) << "bottleneck" << std::setw(14) << "iteration" << std::setw(8)
            << "waste" << "fits\n";
  for (const auto& r : rows) {
    std::string cuts;
    for (int c : r["cuts"]) cuts += (cuts.empty() ? "" : ",") + std::to_string(c);
    std::ostringstream w;
    w << std::fixed << std::setprecision(3) << r["waste_ratio"].get<double>();
    std::cout << std::setw(18) << r["strategy"].get<std::string>() << std::setw(16) << cuts
              << std::setw(14) << ms(r["bottleneck_us"].get<double>()) << std::setw(14)
              << ms(r["iteration_time_us"].get<double>()) << std::setw(8) << w.str()
              << (r["fits"].get<bool>() ? "yes" : "no") << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dawnplan: pipeline partition planner and schedule simulator"};
  app.require_subcommand(1);

  std::string kind = "uniform", m_each = "1M", gen_out;
  int layers = 8;
  std::uint64_t seed = 0;
  std::int64_t t_each = 1000;
  auto* gen = app.add_subcommand("gen", "generate a synthetic profile");
  gen->add_option("--kind", kind)->check(CLI::IsMember({"uniform", "transformer", "cnn"}));
  gen->add_option("--layers,-n", layers, "layers (nodes for uniform)")->check(CLI::PositiveNumber);
  gen->add_option("--seed,-s", seed, "generator seed (DAWNPLAN_SEED overrides)");
  gen->add_option("--t-each", t_each, "uniform: t_f + t_b per node, us");
  gen->add_option("--m-each", m_each, "uniform: activation per node");
  gen->add_option("--out,-o", gen_out, "output file (default stdout)");

  PlanArgs stats_args, plan_args, oracle_args, verify_args, compare_args;
  bool stats_json = false, compare_json = false, exhaustive_memopt = false;

  auto* stats = app.add_subcommand("stats", "memory CDF and ordering premises");
  stats_args.add(stats);
  stats->add_flag("--json", stats_json, "emit JSON");

  auto* plan = app.add_subcommand("plan", "search a partition and memopt plan");
  plan_args.add(plan);
  plan->add_option("--out,-o", plan_args.out, "plan file (default stdout)");

  auto* oracle = app.add_subcommand("oracle", "exhaustive reference plan");
  oracle_args.add(oracle);
  oracle->add_option("--out,-o", oracle_args.out, "plan file (default stdout)");
  oracle->add_flag("--exhaustive-memopt", exhaustive_memopt,
                   "exhaustive memopt on stages with <= 12 tensors");

  auto* verify = app.add_subcommand("verify-theorem", "check the two-stage interval claim");
  verify_args.add(verify, false);

  auto* compare = app.add_subcommand("compare", "compute-, memory-balanced and planner side by side");
  compare_args.add(compare);
  compare->add_flag("--json", compare_json, "emit JSON");

  std::string sim_plan, sim_graph, sim_trace, sim_bw;
  int sim_m = 0;
  auto* sim = app.add_subcommand("simulate", "simulate a plan");
  sim->add_option("plan", sim_plan, "plan JSON")->required();
  sim->add_option("file", sim_graph, "profile JSON")->required();
  sim->add_option("--micro-batches,-m", sim_m, "micro-batches (0: plan default)");
  sim->add_option("--bandwidth", sim_bw, "override plan bandwidth");
  sim->add_option("--trace", sim_trace, "write the event trace as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen(kind, layers, seed, t_each, m_each, gen_out);
    if (*stats) return cmd_stats(stats_args, stats_json);
    if (*plan) return cmd_plan(plan_args);
    if (*oracle) return cmd_oracle(oracle_args, exhaustive_memopt);
    if (*verify) return cmd_verify(verify_args);
    if (*compare) return cmd_compare(compare_args, compare_json);
    if (*sim) return cmd_simulate(sim_plan, sim_graph, sim_m, sim_bw, sim_trace);
  } catch (const dp::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const dp::InstanceTooLargeError& e) {
    std::cerr << "too large: " << e.what() << '\n';
    return kExitTooLarge;
  } catch (const dp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
