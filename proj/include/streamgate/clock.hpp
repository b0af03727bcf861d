#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "streamgate/error.hpp"

namespace streamgate {

/// Seconds between two batch revelations for a stream running at
/// eta * base_rate batches per second.
inline double effective_stream_interval(double base_rate, double eta) {
  if (!(base_rate > 0.0) || !std::isfinite(base_rate))
    throw InvalidArgument("stream base rate must be positive and finite");
  if (!(eta > 0.0) || eta > 1.0) throw InvalidArgument("eta must lie in (0, 1]");
  return 1.0 / (eta * base_rate);
}

/// A constant-rate stream, optionally slowed down by eta.
class StreamClock {
 public:
  StreamClock() = default;
  StreamClock(double base_rate, double eta)
      : base_rate_(base_rate), eta_(eta), interval_(effective_stream_interval(base_rate, eta)) {}

  // A clock whose base interval is given directly; the effective interval is
  // seconds / eta, kept verbatim rather than recomputed from a reciprocal.
  static StreamClock with_interval(double seconds, double eta = 1.0) {
    if (!(seconds > 0.0) || !std::isfinite(seconds))
      throw InvalidArgument("stream interval must be positive and finite");
    if (!(eta > 0.0) || eta > 1.0) throw InvalidArgument("eta must lie in (0, 1]");
    StreamClock c;
    c.base_rate_ = 1.0 / seconds;
    c.eta_ = eta;
    c.interval_ = seconds / eta;
    return c;
  }

  double base_rate() const noexcept { return base_rate_; }
  double eta() const noexcept { return eta_; }
  double effective_interval() const noexcept { return interval_; }

 private:
  double base_rate_ = 1.0;
  double eta_ = 1.0;
  double interval_ = 1.0;
};

using StepCount = std::int64_t;

/// Number of stream ticks consumed by one adaptation that took `elapsed`
/// seconds: ceil(elapsed / interval), never below 1. The quotient is
/// corrected with an exact fma residual so the result is the true ceiling
/// of the rational value of the two doubles, not of their rounded ratio.
inline StepCount relative_adaptation_speed(double effective_interval, double elapsed) {
  if (!(effective_interval > 0.0) || !std::isfinite(effective_interval))
    throw InvalidArgument("relative_adaptation_speed: interval must be positive");
  if (!(elapsed > 0.0) || !std::isfinite(elapsed))
    throw InvalidArgument("relative_adaptation_speed: elapsed must be positive");

  constexpr double kMax = 9.0e15;  // exact integers in double, well inside int64
  double c = std::ceil(elapsed / effective_interval);
  if (c >= kMax) return static_cast<StepCount>(kMax);
  if (c < 1.0) c = 1.0;
  // c * interval < elapsed  =>  c too small
  while (std::fma(c, effective_interval, -elapsed) < 0.0) c += 1.0;
  // (c - 1) * interval >= elapsed  =>  c too large
  while (c > 1.0 && std::fma(c - 1.0, effective_interval, -elapsed) >= 0.0) c -= 1.0;
  return static_cast<StepCount>(c);
}

enum class StepDecision { Adapt, Skip };

/// The adapter is busy on the half-open window [start, busy_until).
constexpr StepDecision schedule_decision(StepCount t, StepCount busy_until) noexcept {
  return t >= busy_until ? StepDecision::Adapt : StepDecision::Skip;
}

}  // namespace streamgate
