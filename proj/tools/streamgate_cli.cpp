#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "streamgate/config.hpp"
#include "streamgate/driver.hpp"
#include "streamgate/replay.hpp"
#include "streamgate/report_io.hpp"

namespace sg = streamgate;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

std::vector<std::string> split_list(const std::string& text) {
  return sg::KeyValueConfig::split(text);
}

std::string output_dir(const std::string& flag, const std::string& configured) {
  if (const char* env = std::getenv("STREAMGATE_OUT"); env && *env) return env;
  return flag.empty() ? configured : flag;
}

sg::ExperimentConfig load(const std::string& path, const std::string& seeds) {
  sg::ExperimentConfig cfg = sg::resolve_config(sg::KeyValueConfig::parse_file(path));
  if (!seeds.empty()) cfg.seeds = sg::KeyValueConfig::parse_list<std::uint64_t>("--seeds", seeds);
  return cfg;
}

void print_reports(const std::vector<sg::RunReport>& reports) {
  for (const auto& r : reports) {
    std::cout << r.run_id << "  error " << sg::format_percent(r.avg_error) << "%";
    if (r.mean_c) std::cout << "  mean C " << sg::format_number(*r.mean_c);
    std::cout << "  adapted " << sg::format_percent(r.adapted_fraction) << "%\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streamgate: test-time adaptation under a constant-speed stream"};
  app.require_subcommand(1);

  std::string config_path, out_flag, seeds, eta_values, trace_path;
  bool emit_schedule = false, emit_trace = false;
  double interval = 1.0, eta = 1.0;
  std::optional<double> fallback_error;

  auto* run = app.add_subcommand("run", "run every configured adapter and protocol");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--out", out_flag, "output directory");
  run->add_option("--seeds", seeds, "comma-separated seeds");
  run->add_flag("--emit-schedule", emit_schedule, "write the per-step ledger");
  run->add_flag("--emit-trace", emit_trace, "write replayable traces of online runs");

  auto* sweep = app.add_subcommand("sweep", "online runs over a grid of stream speeds");
  sweep->add_option("--config", config_path, "config file")->required();
  sweep->add_option("--out", out_flag, "output directory");
  sweep->add_option("--seeds", seeds, "comma-separated seeds");
  sweep->add_option("--eta-values", eta_values, "comma-separated values in (0, 1]");
  sweep->add_flag("--emit-schedule", emit_schedule, "write the per-step ledger");

  auto* replay = app.add_subcommand("replay", "recompute the online protocol from a trace");
  replay->add_option("--trace", trace_path, "trace CSV")->required();
  replay->add_option("--interval", interval, "base stream interval in seconds");
  replay->add_option("--eta", eta, "stream speed factor in (0, 1]");
  replay->add_option("--fallback-error", fallback_error,
                     "assumed fallback error rate for traces without correct_fallback");
  replay->add_option("--out", out_flag, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  sg::RunBatch batch;
  std::filesystem::path out;
  std::string stem;
  try {
    if (*run || *sweep) {
      sg::ExperimentConfig cfg = load(config_path, seeds);
      out = output_dir(out_flag, cfg.out_dir);
      sg::RunOptions opts{emit_schedule, emit_trace};
      if (*run) {
        stem = "results";
        if (emit_trace && cfg.bench.scenario.mode != sg::ScenarioMode::Continual)
          throw sg::ConfigError("--emit-trace", "traces need stream.mode=continual");
        batch = sg::run_experiment(cfg, opts);
      } else {
        stem = "sweep";
        std::vector<double> grid = cfg.eta_values;
        if (!eta_values.empty())
          grid = sg::KeyValueConfig::parse_list<double>("--eta-values", eta_values);
        for (double v : grid)
          if (!(v > 0.0 && v <= 1.0)) throw sg::ConfigError("--eta-values", "values must lie in (0, 1]");
        batch = sg::run_sweep(cfg, grid, opts);
      }
    } else {
      stem = "replay";
      out = output_dir(out_flag, "results");
      if (!std::filesystem::exists(trace_path))
        throw sg::ConfigError("--trace", "no such file '" + trace_path + "'");
      if (!(interval > 0.0)) throw sg::ConfigError("--interval", "must be > 0");
      if (!(eta > 0.0 && eta <= 1.0)) throw sg::ConfigError("--eta", "must lie in (0, 1]");
      if (fallback_error && !(*fallback_error >= 0.0 && *fallback_error <= 1.0))
        throw sg::ConfigError("--fallback-error", "must lie in [0, 1]");
      const auto trace = sg::parse_trace_file(trace_path);
      const auto clock = sg::StreamClock::with_interval(interval, eta);
      std::cout << "effective interval " << sg::format_number(clock.effective_interval()) << " s\n";
      sg::RunReport r = sg::replay_online(trace, clock, {fallback_error});
      r.run_id = "trace/online/eta=" + sg::format_number(eta) + "/seed=0";
      batch.reports.push_back(std::move(r));
    }
  } catch (const sg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const sg::ParseError& e) {
    std::cerr << "trace error: " << e.what() << '\n';
    return kUsageError;
  } catch (const sg::ValidationError& e) {
    std::cerr << "trace error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }

  try {
    sg::write_outputs(out, stem, batch);
  } catch (const std::exception& e) {
    std::cerr << "cannot write output to '" << out.string() << "': " << e.what() << '\n';
    return kUsageError;
  }
  print_reports(batch.reports);
  for (const auto& d : batch.deltas)
    std::cout << d.adapter << " seed " << d.seed << "  offline " << sg::format_percent(d.offline_error)
              << "%  online " << sg::format_percent(d.online_error) << "%  delta "
              << (d.delta >= 0 ? "+" : "") << sg::format_percent(d.delta) << "\n";
  std::cout << "wrote " << (out / (stem + ".csv")).string() << '\n';
  return 0;
}
