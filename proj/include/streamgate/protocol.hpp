#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "streamgate/adapters.hpp"
#include "streamgate/batch.hpp"
#include "streamgate/clock.hpp"
#include "streamgate/metrics.hpp"
#include "streamgate/model.hpp"
#include "streamgate/random.hpp"
#include "streamgate/schedule.hpp"
#include "streamgate/trace.hpp"

namespace streamgate {

enum class Protocol { Offline, Online, SingleModel };

inline constexpr std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::Offline: return "offline";
    case Protocol::Online: return "online";
    case Protocol::SingleModel: return "single_model";
  }
  return "?";
}

inline Protocol parse_protocol(std::string_view s) {
  for (auto p : {Protocol::Offline, Protocol::Online, Protocol::SingleModel})
    if (to_string(p) == s) return p;
  throw InvalidArgument("unknown protocol '" + std::string(s) + "'");
}

struct SchedulePolicy {
  enum class Kind { BusyWindow, FixedModulo };
  Kind kind = Kind::BusyWindow;
  StepCount k = 1;  // FixedModulo period

  static SchedulePolicy busy_window() { return {}; }
  static SchedulePolicy fixed_modulo(StepCount k) { return {Kind::FixedModulo, k}; }
};

// When the parameters produced at an adapting step start serving skipped batches.
enum class FallbackVisibility { Immediate, Delayed };
enum class Timing { Simulated, Measured };

struct ProtocolConfig {
  Protocol protocol = Protocol::Online;
  SchedulePolicy schedule;
  double alpha = 0.0;
  FallbackVisibility fallback_visibility = FallbackVisibility::Immediate;
  Timing timing = Timing::Simulated;
  std::uint64_t seed = 0;
  StreamClock clock;
  bool keep_schedule = false;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
    if (schedule.kind == SchedulePolicy::Kind::FixedModulo && schedule.k < 1)
      throw InvalidArgument("fixed-modulo period must be >= 1");
  }
};

/// alpha * theta + (1 - alpha) * theta_hat, field by field. Variances are
/// floored to keep the result a valid parameter set.
inline ModelParams blend_parameters(const ModelParams& theta, const ModelParams& theta_hat,
                                    double alpha) {
  if (!theta.same_shape(theta_hat)) throw InvalidArgument("blend_parameters: shape mismatch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("blend_parameters: alpha outside [0, 1]");
  if (alpha == 0.0) {
    ModelParams out = theta_hat;
    out.var = floor_variance(std::move(out.var));
    return out;
  }
  if (alpha == 1.0) {
    ModelParams out = theta;
    out.var = floor_variance(std::move(out.var));
    return out;
  }
  const double beta = 1.0 - alpha;
  ModelParams out;
  out.mu = alpha * theta.mu + beta * theta_hat.mu;
  out.var = floor_variance(alpha * theta.var + beta * theta_hat.var);
  out.gamma = alpha * theta.gamma + beta * theta_hat.gamma;
  out.beta = alpha * theta.beta + beta * theta_hat.beta;
  out.W = alpha * theta.W + beta * theta_hat.W;
  out.b = alpha * theta.b + beta * theta_hat.b;
  return out;
}

namespace detail {

// Orders all memory effects before and after a timed region.
inline void timing_barrier() {
  std::atomic_thread_fence(std::memory_order_seq_cst);
#if defined(__GNUC__)
  asm volatile("" ::: "memory");
#endif
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

struct TimedOutcome {
  AdaptOutcome outcome;
  double interval = 1.0;  // stream interval this step's C is measured against
};

/// Runs one adaptation. Simulated timing keeps the adapter's modelled cost
/// and the clock's interval. Measured timing replaces the cost with the
/// wall-clock time of adapt() and re-measures the base model's forward pass
/// on the same batch to obtain the interval (divided by eta); both timers are
/// fenced on entry and exit.
inline TimedOutcome timed_adapt(Adapter& adapter, const Batch& batch, Timing timing,
                                const StreamClock& clock) {
  TimedOutcome r;
  if (timing == Timing::Simulated) {
    r.outcome = adapter.adapt(batch);
    r.interval = clock.effective_interval();
    return r;
  }
  detail::timing_barrier();
  auto t0 = std::chrono::steady_clock::now();
  const Prediction base = adapter.predict(batch.features);
  detail::timing_barrier();
  const double forward = std::max(detail::seconds_since(t0), kMinCost);
  (void)base;

  detail::timing_barrier();
  t0 = std::chrono::steady_clock::now();
  r.outcome = adapter.adapt(batch);
  detail::timing_barrier();
  r.outcome.cost = std::max(detail::seconds_since(t0), kMinCost);
  r.interval = forward / clock.eta();
  return r;
}

/// Seconds adapter spends on `batch` under the given timing mode. This
/// performs (but does not commit) an adaptation step.
inline double latency_of(Adapter& adapter, const Batch& batch, Timing timing,
                         const StreamClock& clock = {}) {
  return timed_adapt(adapter, batch, timing, clock).outcome.cost;
}

namespace detail {

inline Labels random_predictions(std::int64_t n, int num_classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, num_classes - 1);
  Labels out(static_cast<std::size_t>(n));
  for (auto& y : out) y = u(rng);
  return out;
}

/// The single evaluation loop behind every protocol. Offline adapts on every
/// step; the others consult the schedule policy.
inline RunReport run_protocol(std::span<const Stream> streams, Adapter& adapter,
                              const ProtocolConfig& cfg, int num_classes,
                              std::vector<TraceRecord>* trace) {
  cfg.validate();
  if (streams.empty()) throw InvalidArgument("run: empty stream");
  std::size_t total = 0;
  for (const auto& s : streams) total += s.batches.size();
  if (total == 0) throw InvalidArgument("run: empty stream");
  if (cfg.protocol == Protocol::SingleModel && num_classes < 2)
    throw InvalidArgument("run: single-model protocol needs num_classes >= 2");
  if (trace && (streams.size() != 1 || cfg.protocol == Protocol::SingleModel))
    throw InvalidArgument("trace recording needs one stream under a dual-model protocol");

  std::mt19937_64 rng(mix_seed({cfg.seed, 0x72616e646f6dULL}));
  std::vector<ScheduleRecord> ledger;
  ledger.reserve(total);
  std::int64_t version_counter = 0;
  std::int64_t current_version = 0;

  for (const Stream& stream : streams) {
    if (stream.reset_before) {
      adapter.reset();
      current_version = 0;
    }
    StepCount busy_until = 0;
    ModelParams fallback = adapter.params();
    std::int64_t fallback_version = current_version;

    for (std::size_t i = 0; i < stream.batches.size(); ++i) {
      const Batch& batch = stream.batches[i];
      const auto t = static_cast<StepCount>(i);
      bool adapt = true;
      if (cfg.protocol != Protocol::Offline) {
        adapt = cfg.schedule.kind == SchedulePolicy::Kind::BusyWindow
                    ? schedule_decision(t, busy_until) == StepDecision::Adapt
                    : t % cfg.schedule.k == 0;
      }

      ScheduleRecord rec;
      rec.step = batch.t;
      rec.batch_size = batch.size();
      rec.domain_id = batch.domain_id;

      TraceRecord tr;
      if (trace) {
        tr.step = batch.t;
        tr.domain_id = batch.domain_id;
        tr.batch_size = batch.size();
      }

      try {
        if (adapt) {
          if (trace) {
            tr.correct_fallback =
                batch.size() - count_errors(predict(fallback, batch.features).labels, batch.labels);
          }
          const ModelParams before = adapter.params();
          const std::int64_t before_version = current_version;
          TimedOutcome timed = timed_adapt(adapter, batch, cfg.timing, cfg.clock);
          const StepCount c = relative_adaptation_speed(timed.interval, timed.outcome.cost);
          adapter.set_params(blend_parameters(before, timed.outcome.theta_hat, cfg.alpha));
          current_version = ++version_counter;
          busy_until = t + c;
          if (cfg.fallback_visibility == FallbackVisibility::Immediate) {
            fallback = adapter.params();
            fallback_version = current_version;
          } else {
            fallback = before;
            fallback_version = before_version;
          }
          rec.action = StepAction::Adapted;
          rec.c_value = c;
          rec.params_version = current_version;
          rec.degraded = timed.outcome.degraded;
          rec.error_count = count_errors(timed.outcome.y_hat, batch.labels);
          if (trace) {
            tr.latency = timed.outcome.cost;
            tr.correct_adapted = batch.size() - rec.error_count;
          }
        } else if (cfg.protocol == Protocol::SingleModel) {
          rec.action = StepAction::SkippedRandom;
          rec.params_version = kRandomClassifierVersion;
          rec.error_count =
              count_errors(random_predictions(batch.size(), num_classes, rng), batch.labels);
        } else {
          // Under delayed visibility the pending update lands when the window
          // ends, which is also where the next adaptation starts.
          rec.action = StepAction::SkippedFallback;
          rec.params_version = fallback_version;
          rec.error_count = count_errors(predict(fallback, batch.features).labels, batch.labels);
          if (trace) {
            auto shadow = adapter.clone();
            TimedOutcome cf = timed_adapt(*shadow, batch, cfg.timing, cfg.clock);
            tr.latency = cf.outcome.cost;
            tr.correct_adapted = batch.size() - count_errors(cf.outcome.y_hat, batch.labels);
            tr.correct_fallback = batch.size() - rec.error_count;
          }
        }
      } catch (const RunAborted&) {
        throw;
      } catch (const std::exception& e) {
        throw RunAborted(e.what(), batch.t);
      }
      ledger.push_back(rec);
      if (trace) trace->push_back(tr);
    }
  }

  RunReport report = build_report(ledger, cfg.keep_schedule);
  report.protocol = std::string(to_string(cfg.protocol));
  report.adapter = adapter.name();
  report.eta = cfg.clock.eta();
  report.seed = cfg.seed;
  return report;
}

}  // namespace detail

/// Every batch is adapted; the stream waits for the method.
inline RunReport run_offline(std::span<const Stream> streams, Adapter& adapter,
                             ProtocolConfig cfg) {
  cfg.protocol = Protocol::Offline;
  return detail::run_protocol(streams, adapter, cfg, 0, nullptr);
}

/// Constant-speed stream; batches revealed while the method is busy are
/// predicted by the most recent parameter snapshot.
inline RunReport run_online(std::span<const Stream> streams, Adapter& adapter,
                            ProtocolConfig cfg) {
  cfg.protocol = Protocol::Online;
  return detail::run_protocol(streams, adapter, cfg, 0, nullptr);
}

/// As run_online, but batches revealed while the method is busy get
/// uniformly random labels over `num_classes`.
inline RunReport run_single_model(std::span<const Stream> streams, Adapter& adapter,
                                  ProtocolConfig cfg, int num_classes) {
  cfg.protocol = Protocol::SingleModel;
  return detail::run_protocol(streams, adapter, cfg, num_classes, nullptr);
}

inline RunReport run(std::span<const Stream> streams, Adapter& adapter, const ProtocolConfig& cfg,
                     int num_classes) {
  return detail::run_protocol(streams, adapter, cfg, num_classes, nullptr);
}

/// Runs a dual-model protocol over a single stream and records, for every
/// step, the counterfactual outcome of the branch not taken: skipped steps
/// are adapted on a throwaway clone of the adapter, adapted steps are also
/// scored with the fallback snapshot.
inline RunReport run_with_trace(const Stream& stream, Adapter& adapter, const ProtocolConfig& cfg,
                                std::vector<TraceRecord>& trace) {
  trace.clear();
  return detail::run_protocol(std::span<const Stream>(&stream, 1), adapter, cfg, 0, &trace);
}

}  // namespace streamgate
