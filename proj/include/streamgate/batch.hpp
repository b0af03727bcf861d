#pragma once

#include <cstdint>
#include <vector>

#include "streamgate/model.hpp"

namespace streamgate {

/// One revelation of the stream.
struct Batch {
  Features features;  // batch x dim
  Labels labels;
  int domain_id = 0;
  std::int64_t t = 0;

  Eigen::Index size() const { return features.rows(); }
};

/// A contiguous run of batches. `reset_before` marks that the adapter is
/// restored to its pretrained state before the first batch.
struct Stream {
  std::vector<Batch> batches;
  bool reset_before = true;
};

}  // namespace streamgate
