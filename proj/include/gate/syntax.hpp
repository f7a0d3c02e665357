#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gate/corpus.hpp"
#include "gate/error.hpp"

namespace gate {

// Sentinel for an unbounded attention distance threshold.
inline constexpr int kUnboundedDelta = std::numeric_limits<int>::max();

// Symmetric all-pairs shortest-path hop counts on the undirected dependency
// tree. The diagonal is 1 (self-loop); arc direction is ignored.
struct DistanceMatrix {
  size_t n = 0;
  std::vector<int> d;  // row-major n x n

  DistanceMatrix() = default;
  explicit DistanceMatrix(size_t size) : n(size), d(size * size, 0) {}

  int at(size_t i, size_t j) const { return d[i * n + j]; }
  int& at(size_t i, size_t j) { return d[i * n + j]; }
};

// Per-pair attend/forbid decisions for one attention head.
struct AttentionMask {
  size_t n = 0;
  std::vector<uint8_t> allow;  // row-major n x n
  int delta = kUnboundedDelta;

  bool allowed(size_t i, size_t j) const { return allow[i * n + j] != 0; }
};

// One distance threshold per attention head.
using DeltaSchedule = std::vector<int>;

// BFS from every node over the undirected tree; diagonal forced to 1.
DistanceMatrix pairwise_distances(const DepSentence& sentence);

// allow[i][j] iff d[i][j] <= delta. delta must be >= 1 (a zero threshold
// would forbid the self-loop and empty a softmax row) or kUnboundedDelta.
AttentionMask build_mask(const DistanceMatrix& dist, int delta);

// The tuned per-head thresholds for the two tasks; defined for 8 heads only.
DeltaSchedule default_schedule(Task task, size_t n_heads);

// Comma-separated schedule with "inf" for unbounded, e.g. "2,2,4,4,inf,inf".
DeltaSchedule parse_delta_schedule(const std::string& text);
std::string delta_schedule_to_string(const DeltaSchedule& schedule);

}  // namespace gate
