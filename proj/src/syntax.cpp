#include "gate/syntax.hpp"

#include <queue>
#include <sstream>

namespace gate {

DistanceMatrix pairwise_distances(const DepSentence& sentence) {
  const size_t n = sentence.size();
  std::vector<std::vector<size_t>> adjacent(n);
  for (size_t i = 0; i < n; ++i) {
    int head = sentence.tokens[i].head;
    if (head == kRootHead) continue;
    adjacent[i].push_back(static_cast<size_t>(head));
    adjacent[static_cast<size_t>(head)].push_back(i);
  }

  DistanceMatrix dist(n);
  std::vector<int> hops(n);
  for (size_t start = 0; start < n; ++start) {
    std::fill(hops.begin(), hops.end(), -1);
    hops[start] = 0;
    std::queue<size_t> queue;
    queue.push(start);
    while (!queue.empty()) {
      size_t at = queue.front();
      queue.pop();
      for (size_t next : adjacent[at]) {
        if (hops[next] < 0) {
          hops[next] = hops[at] + 1;
          queue.push(next);
        }
      }
    }
    for (size_t j = 0; j < n; ++j) dist.at(start, j) = hops[j];
    dist.at(start, start) = 1;  // self-loop
  }
  return dist;
}

AttentionMask build_mask(const DistanceMatrix& dist, int delta) {
  if (delta < 1)
    throw ConfigError("attention distance threshold must be >= 1, got " +
                      std::to_string(delta));
  AttentionMask mask;
  mask.n = dist.n;
  mask.delta = delta;
  mask.allow.resize(dist.n * dist.n, 1);
  if (delta == kUnboundedDelta) return mask;
  for (size_t i = 0; i < dist.n; ++i)
    for (size_t j = 0; j < dist.n; ++j)
      mask.allow[i * dist.n + j] = dist.at(i, j) <= delta ? 1 : 0;
  return mask;
}

DeltaSchedule default_schedule(Task task, size_t n_heads) {
  if (n_heads != 8)
    throw ConfigError(
        "no default distance schedule for " + std::to_string(n_heads) +
        " heads; explicit schedule required");
  const int u = kUnboundedDelta;
  if (task == Task::kEventArgument) return {2, 2, 4, 4, u, u, u, u};
  return {1, 1, 2, 2, u, u, u, u};
}

DeltaSchedule parse_delta_schedule(const std::string& text) {
  DeltaSchedule schedule;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "inf" || item == "INF" || item == "Inf") {
      schedule.push_back(kUnboundedDelta);
      continue;
    }
    try {
      size_t pos = 0;
      int value = std::stoi(item, &pos);
      if (pos != item.size() || value < 1) throw std::invalid_argument(item);
      schedule.push_back(value);
    } catch (const std::exception&) {
      throw ConfigError("bad delta schedule entry \"" + item +
                        "\" (expected integer >= 1 or \"inf\")");
    }
  }
  if (schedule.empty()) throw ConfigError("empty delta schedule");
  return schedule;
}

std::string delta_schedule_to_string(const DeltaSchedule& schedule) {
  std::ostringstream out;
  for (size_t i = 0; i < schedule.size(); ++i) {
    if (i) out << ',';
    if (schedule[i] == kUnboundedDelta)
      out << "inf";
    else
      out << schedule[i];
  }
  return out.str();
}

}  // namespace gate
