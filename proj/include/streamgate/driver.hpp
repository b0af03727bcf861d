#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "streamgate/config.hpp"
#include "streamgate/experiment.hpp"
#include "streamgate/replay.hpp"
#include "streamgate/report_io.hpp"

namespace streamgate {

/// A run that failed after the config was accepted.
class RunFailed : public std::runtime_error {
 public:
  RunFailed(std::string run_id, const std::string& what)
      : std::runtime_error("run " + run_id + " failed: " + what), run_id_(std::move(run_id)) {}
  const std::string& run_id() const noexcept { return run_id_; }

 private:
  std::string run_id_;
};

inline std::string make_run_id(const std::string& adapter, Protocol p, double eta,
                               std::uint64_t seed) {
  return adapter + "/" + std::string(to_string(p)) + "/eta=" + format_number(eta) +
         "/seed=" + std::to_string(seed);
}

struct DeltaRow {
  std::string adapter;
  std::uint64_t seed = 0;
  double offline_error = 0.0;
  double online_error = 0.0;
  double delta = 0.0;
};

struct RunOptions {
  bool keep_schedule = false;
  // One trace per online run; only valid for single-stream scenarios.
  bool record_traces = false;
};

struct RunBatch {
  std::vector<RunReport> reports;
  std::vector<DeltaRow> deltas;
  std::map<std::string, std::vector<TraceRecord>> traces;  // by run_id
};

namespace detail {

struct RunJob {
  std::size_t adapter_index;
  Protocol protocol;
  double eta;
};

struct SeedResult {
  std::vector<RunReport> reports;
  std::map<std::string, std::vector<TraceRecord>> traces;
};

inline SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::vector<RunJob>& jobs, const RunOptions& opts) {
  const Benchmark bench = build_benchmark(cfg.bench, seed);
  SeedResult out;
  for (const auto& job : jobs) {
    const AdapterEntry& entry = cfg.adapters[job.adapter_index];
    const std::string id = make_run_id(entry.name, job.protocol, job.eta, seed);
    try {
      auto adapter = make_adapter(entry.name, bench.pretrained, entry.settings);
      ProtocolConfig pc = cfg.protocol;
      pc.protocol = job.protocol;
      pc.seed = seed;
      pc.keep_schedule = opts.keep_schedule;
      pc.clock = StreamClock(cfg.protocol.clock.base_rate(), job.eta);
      RunReport r;
      if (opts.record_traces && job.protocol == Protocol::Online) {
        std::vector<TraceRecord> trace;
        r = run_with_trace(bench.streams.front(), *adapter, pc, trace);
        out.traces.emplace(id, std::move(trace));
        for (auto& d : r.per_domain)
          d.category = bench.domains[static_cast<std::size_t>(d.domain_id)].category();
      } else {
        r = evaluate(bench, *adapter, pc);
      }
      r.run_id = id;
      r.scenario = scenario_name(cfg.bench.scenario);
      out.reports.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw RunFailed(id, e.what());
    }
  }
  return out;
}

// Seeds run concurrently; results are collected in seed order.
inline RunBatch run_jobs(const ExperimentConfig& cfg, const std::vector<RunJob>& jobs,
                         const RunOptions& opts) {
  if (cfg.seeds.empty()) throw ConfigError("run.seeds", "no seeds");
  if (opts.record_traces && cfg.bench.scenario.mode != ScenarioMode::Continual)
    throw ConfigError("stream.mode", "traces need a single (continual) stream");
  std::vector<std::future<SeedResult>> futures;
  for (auto seed : cfg.seeds)
    futures.push_back(std::async(std::launch::async, run_seed, std::cref(cfg), seed,
                                 std::cref(jobs), std::cref(opts)));
  RunBatch out;
  for (auto& f : futures) {
    SeedResult s = f.get();
    for (auto& r : s.reports) out.reports.push_back(std::move(r));
    out.traces.merge(s.traces);
  }
  return out;
}

}  // namespace detail

/// Online minus offline error for every (adapter, seed) that has both.
inline std::vector<DeltaRow> compute_deltas(const std::vector<RunReport>& reports) {
  std::vector<DeltaRow> out;
  for (const auto& off : reports) {
    if (off.protocol != "offline") continue;
    for (const auto& on : reports) {
      if (on.protocol != "online" || on.adapter != off.adapter || on.seed != off.seed) continue;
      out.push_back({off.adapter, off.seed, off.avg_error, on.avg_error, delta(off, on)});
    }
  }
  std::sort(out.begin(), out.end(), [](const DeltaRow& a, const DeltaRow& b) {
    return std::tie(a.adapter, a.seed) < std::tie(b.adapter, b.seed);
  });
  return out;
}

/// One report per (seed, adapter, protocol) at the configured clock.
inline RunBatch run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  std::vector<detail::RunJob> jobs;
  for (std::size_t a = 0; a < cfg.adapters.size(); ++a)
    for (auto p : cfg.protocols) jobs.push_back({a, p, cfg.protocol.clock.eta()});
  RunBatch out = detail::run_jobs(cfg, jobs, opts);
  out.deltas = compute_deltas(out.reports);
  return out;
}

/// One report per (eta, adapter, seed), sorted in that order. Uses the first
/// non-offline protocol of the config, online if there is none.
inline RunBatch run_sweep(const ExperimentConfig& cfg, const std::vector<double>& etas,
                          const RunOptions& opts = {}) {
  if (etas.empty()) throw ConfigError("sweep.eta_values", "empty list");
  Protocol p = Protocol::Online;
  for (auto q : cfg.protocols)
    if (q != Protocol::Offline) {
      p = q;
      break;
    }
  std::vector<detail::RunJob> jobs;
  for (double eta : etas) {
    if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("sweep.eta_values", "values must lie in (0, 1]");
    for (std::size_t a = 0; a < cfg.adapters.size(); ++a) jobs.push_back({a, p, eta});
  }
  RunBatch out = detail::run_jobs(cfg, jobs, opts);
  std::stable_sort(out.reports.begin(), out.reports.end(), [](const RunReport& a, const RunReport& b) {
    return std::tie(a.eta, a.adapter, a.seed) < std::tie(b.eta, b.adapter, b.seed);
  });
  return out;
}

inline void write_deltas_csv(std::ostream& os, const std::vector<DeltaRow>& rows) {
  os << "adapter,seed,offline_error,online_error,delta\n";
  for (const auto& d : rows)
    os << d.adapter << ',' << d.seed << ',' << format_number(d.offline_error) << ','
       << format_number(d.online_error) << ',' << format_number(d.delta) << '\n';
}

inline nlohmann::json summary_json(const RunBatch& batch) {
  nlohmann::json deltas = nlohmann::json::array();
  for (const auto& d : batch.deltas)
    deltas.push_back({{"adapter", d.adapter},
                      {"seed", d.seed},
                      {"offline_error", d.offline_error},
                      {"online_error", d.online_error},
                      {"delta", d.delta}});
  return {{"runs", batch.reports}, {"deltas", deltas}};
}

/// Turns a run id into a file name.
inline std::string file_stem(std::string id) {
  for (char& c : id)
    if (c == '/' || c == '=') c = '_';
  return id;
}

/// Writes `<stem>.csv`, `summary.json`, and when present `deltas.csv`,
/// per-run schedules and traces.
inline void write_outputs(const std::filesystem::path& dir, const std::string& stem,
                          const RunBatch& batch) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / (stem + ".csv"), std::ios::binary);
    write_results_csv(os, batch.reports);
    if (!os) throw std::runtime_error("cannot write " + (dir / (stem + ".csv")).string());
  }
  {
    std::ofstream os(dir / "summary.json", std::ios::binary);
    os << summary_json(batch).dump(2) << '\n';
  }
  if (!batch.deltas.empty()) {
    std::ofstream os(dir / "deltas.csv", std::ios::binary);
    write_deltas_csv(os, batch.deltas);
  }
  for (const auto& r : batch.reports) {
    if (r.schedule.empty()) continue;
    std::filesystem::create_directories(dir / "schedules");
    std::ofstream os(dir / "schedules" / (file_stem(r.run_id) + ".csv"), std::ios::binary);
    write_schedule_csv(os, r.schedule);
  }
  for (const auto& [id, trace] : batch.traces) {
    std::filesystem::create_directories(dir / "traces");
    std::ofstream os(dir / "traces" / (file_stem(id) + ".csv"), std::ios::binary);
    write_trace(os, trace);
  }
}

}  // namespace streamgate
