#include "xray/time_align.hpp"

#include <algorithm>
#include <cstdlib>

#include "xray/error.hpp"

namespace xray::align {

std::vector<Interval> syscall_intervals(const std::vector<HostEvent>& host) {
  std::vector<Interval> raw;
  bool open = false;
  std::int64_t entered = 0;
  for (const auto& ev : host) {
    if (ev.kind == HostEventKind::SyscallEnter) {
      open = true;
      entered = ev.ts.epoch_ns;
    } else if (ev.kind == HostEventKind::SyscallExit && open) {
      raw.push_back({entered, ev.ts.epoch_ns});
      open = false;
    }
  }
  std::sort(raw.begin(), raw.end(), [](const Interval& a, const Interval& b) { return a.start < b.start; });
  std::vector<Interval> merged;
  for (const auto& iv : raw) {
    if (!merged.empty() && iv.start <= merged.back().end) {
      merged.back().end = std::max(merged.back().end, iv.end);
    } else {
      merged.push_back(iv);
    }
  }
  return merged;
}

namespace {

bool inside(const std::vector<Interval>& intervals, std::int64_t ts) {
  auto it = std::upper_bound(intervals.begin(), intervals.end(), ts,
                             [](std::int64_t t, const Interval& iv) { return t < iv.start; });
  if (it == intervals.begin()) return false;
  --it;
  return ts <= it->end;
}

bool better(std::int64_t candidate, std::int64_t incumbent) {
  auto a = std::llabs(candidate);
  auto b = std::llabs(incumbent);
  return a < b || (a == b && candidate > incumbent);
}

}  // namespace

std::size_t count_violations(const std::vector<Interval>& intervals, const std::vector<DeviceCommand>& cmds,
                             std::int64_t offset_ns) {
  std::size_t n = 0;
  for (const auto& c : cmds)
    if (!inside(intervals, c.ts.epoch_ns + offset_ns)) ++n;
  return n;
}

ClockOffset estimate_offset(const std::vector<HostEvent>& host, const std::vector<DeviceCommand>& cmds) {
  auto intervals = syscall_intervals(host);
  if (intervals.empty()) throw Error(ErrorKind::Validation, "no anchors: host trace has no syscall intervals");
  if (cmds.empty()) return ClockOffset{0, OffsetMethod::Estimated, 0};

  // For command c and interval [s, e], shifts in [s - c, e - c] anchor c.
  // Intervals are disjoint, so per command these ranges are disjoint and the
  // anchored count at shift x is #(range starts <= x) - #(range ends < x).
  std::vector<std::int64_t> starts;
  std::vector<std::int64_t> ends;
  starts.reserve(cmds.size() * intervals.size());
  ends.reserve(cmds.size() * intervals.size());
  for (const auto& c : cmds) {
    for (const auto& iv : intervals) {
      starts.push_back(iv.start - c.ts.epoch_ns);
      ends.push_back(iv.end - c.ts.epoch_ns);
    }
  }
  std::vector<std::int64_t> candidates;
  candidates.reserve(starts.size() + ends.size() + 1);
  candidates.push_back(0);
  candidates.insert(candidates.end(), starts.begin(), starts.end());
  candidates.insert(candidates.end(), ends.begin(), ends.end());
  std::sort(starts.begin(), starts.end());
  std::sort(ends.begin(), ends.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::size_t best_anchored = 0;
  std::int64_t best = 0;
  bool have = false;
  for (auto x : candidates) {
    auto opened = static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.end(), x) - starts.begin());
    auto closed = static_cast<std::size_t>(std::lower_bound(ends.begin(), ends.end(), x) - ends.begin());
    std::size_t anchored = opened - closed;
    if (!have || anchored > best_anchored || (anchored == best_anchored && better(x, best))) {
      best_anchored = anchored;
      best = x;
      have = true;
    }
  }
  return ClockOffset{best, OffsetMethod::Estimated, cmds.size() - best_anchored};
}

ClockOffset configured_offset(const std::vector<HostEvent>& host, const std::vector<DeviceCommand>& cmds,
                              std::int64_t offset_ns) {
  auto intervals = syscall_intervals(host);
  return ClockOffset{offset_ns, OffsetMethod::Configured, count_violations(intervals, cmds, offset_ns)};
}

std::vector<DeviceCommand> apply_offset(const std::vector<DeviceCommand>& cmds, std::int64_t offset_ns) {
  std::vector<DeviceCommand> out = cmds;
  for (auto& c : out) {
    std::int64_t ts = c.ts.epoch_ns + offset_ns;
    if (ts < 0)
      throw Error(ErrorKind::Validation, "apply_offset: " + c.name + " at " + std::to_string(c.ts.epoch_ns) +
                                             " would move before the epoch");
    c.ts = Timestamp{ts};
  }
  return out;
}

}  // namespace xray::align
