#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "streamgate/error.hpp"

namespace streamgate {

// Costs are floored here so every adaptation consumes positive time.
inline constexpr double kMinCost = 1e-12;

/// Simulated time an adapter spends on one batch.
class LatencyModel {
 public:
  enum class Kind { Constant, PerSample, Stochastic };

  static LatencyModel constant(double seconds) {
    check_non_negative(seconds, "constant latency");
    LatencyModel m;
    m.kind_ = Kind::Constant;
    m.a_ = seconds;
    return m;
  }

  // seconds_per_sample * batch_size + base
  static LatencyModel per_sample(double seconds_per_sample, double base) {
    check_non_negative(seconds_per_sample, "per-sample latency");
    check_non_negative(base, "latency base");
    LatencyModel m;
    m.kind_ = Kind::PerSample;
    m.a_ = seconds_per_sample;
    m.b_ = base;
    return m;
  }

  // Uniform on [mean - jitter, mean + jitter], seeded.
  static LatencyModel stochastic(double mean, double jitter, std::uint64_t seed) {
    check_non_negative(mean, "latency mean");
    check_non_negative(jitter, "latency jitter");
    LatencyModel m;
    m.kind_ = Kind::Stochastic;
    m.a_ = mean;
    m.b_ = jitter;
    m.seed_ = seed;
    m.rng_.seed(seed);
    return m;
  }

  Kind kind() const noexcept { return kind_; }
  double mean_or_seconds() const noexcept { return a_; }

  double draw(std::int64_t batch_size) {
    double v = 0.0;
    switch (kind_) {
      case Kind::Constant: v = a_; break;
      case Kind::PerSample: v = a_ * double(batch_size) + b_; break;
      case Kind::Stochastic: {
        std::uniform_real_distribution<double> u(a_ - b_, a_ + b_);
        v = b_ > 0.0 ? u(rng_) : a_;
        break;
      }
    }
    return std::max(v, kMinCost);
  }

  // Restart the stochastic sequence.
  void reset() { rng_.seed(seed_); }

  std::string describe() const {
    switch (kind_) {
      case Kind::Constant: return "constant(" + std::to_string(a_) + ")";
      case Kind::PerSample:
        return "per_sample(" + std::to_string(a_) + "," + std::to_string(b_) + ")";
      case Kind::Stochastic:
        return "stochastic(" + std::to_string(a_) + "," + std::to_string(b_) + ")";
    }
    return "?";
  }

 private:
  static void check_non_negative(double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidArgument(std::string(what) + " must be finite and >= 0");
  }

  Kind kind_ = Kind::Constant;
  double a_ = 1.0;
  double b_ = 0.0;
  std::uint64_t seed_ = 0;
  std::mt19937_64 rng_{0};
};

/// Named cost profiles in stream intervals, mirroring measured relative
/// adaptation speeds of published method families.
inline LatencyModel latency_profile(std::string_view name) {
  if (name == "forward") return LatencyModel::constant(1.0);
  if (name == "entropy") return LatencyModel::constant(3.0);
  if (name == "ttac") return LatencyModel::constant(12.0);
  if (name == "memo") return LatencyModel::constant(54.0);
  if (name == "diffusion") return LatencyModel::constant(810.0);
  throw InvalidArgument("unknown latency profile '" + std::string(name) + "'");
}

}  // namespace streamgate
