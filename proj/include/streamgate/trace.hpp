#pragma once

#include <cstdint>
#include <optional>

namespace streamgate {

/// Recorded cost and correctness of one stream batch, under both branches
/// the online protocol can take.
struct TraceRecord {
  std::int64_t step = 0;
  double latency = 0.0;                     // seconds spent adapting this batch
  std::int64_t correct_adapted = 0;         // if this batch is adapted
  std::optional<std::int64_t> correct_fallback;  // if predicted by the last snapshot
  int domain_id = 0;
  std::int64_t batch_size = 0;

  bool operator==(const TraceRecord&) const = default;
};

}  // namespace streamgate
