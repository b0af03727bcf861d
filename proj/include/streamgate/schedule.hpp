#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "streamgate/clock.hpp"
#include "streamgate/error.hpp"

namespace streamgate {

enum class StepAction { Adapted, SkippedFallback, SkippedRandom };

inline constexpr std::string_view to_string(StepAction a) {
  switch (a) {
    case StepAction::Adapted: return "adapted";
    case StepAction::SkippedFallback: return "skipped_fallback";
    case StepAction::SkippedRandom: return "skipped_random";
  }
  return "?";
}

inline StepAction parse_step_action(std::string_view s) {
  for (auto a : {StepAction::Adapted, StepAction::SkippedFallback, StepAction::SkippedRandom})
    if (to_string(a) == s) return a;
  throw InvalidArgument("unknown step action '" + std::string(s) + "'");
}

// params_version of predictions made by the random classifier.
inline constexpr std::int64_t kRandomClassifierVersion = -1;

/// One line of the per-step ledger.
struct ScheduleRecord {
  StepCount step = 0;
  StepAction action = StepAction::Adapted;
  std::optional<StepCount> c_value;  // set iff adapted
  std::int64_t params_version = 0;
  std::int64_t error_count = 0;
  std::int64_t batch_size = 0;
  int domain_id = 0;
  bool degraded = false;

  void validate() const {
    if (action == StepAction::Adapted && (!c_value || *c_value < 1))
      throw ValidationError("adapted step without a valid C value");
    if (action != StepAction::Adapted && c_value)
      throw ValidationError("skipped step carries a C value");
    if (error_count < 0 || error_count > batch_size)
      throw ValidationError("error count outside [0, batch_size]");
  }

  bool operator==(const ScheduleRecord&) const = default;
};

}  // namespace streamgate
