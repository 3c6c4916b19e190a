#pragma once

#include <cstdint>
#include <vector>

#include "xray/model.hpp"

namespace xray::align {

enum class OffsetMethod { Configured, Estimated };

struct ClockOffset {
  std::int64_t offset_ns = 0;  // added to device timestamps
  OffsetMethod method = OffsetMethod::Estimated;
  std::size_t residual_violations = 0;

  friend bool operator==(const ClockOffset&, const ClockOffset&) = default;
};

struct Interval {
  std::int64_t start = 0;
  std::int64_t end = 0;
};

// Syscall intervals from enter/exit pairs, merged where they touch or overlap.
std::vector<Interval> syscall_intervals(const std::vector<HostEvent>& host);

// Commands whose shifted timestamp lies outside every interval (closed bounds).
std::size_t count_violations(const std::vector<Interval>& intervals, const std::vector<DeviceCommand>& cmds,
                             std::int64_t offset_ns);

// Smallest-magnitude shift minimizing violations. Candidates are zero and every
// shift that puts some command exactly on some interval boundary; among equal
// magnitudes the positive shift wins.
ClockOffset estimate_offset(const std::vector<HostEvent>& host, const std::vector<DeviceCommand>& cmds);

ClockOffset configured_offset(const std::vector<HostEvent>& host, const std::vector<DeviceCommand>& cmds,
                              std::int64_t offset_ns);

std::vector<DeviceCommand> apply_offset(const std::vector<DeviceCommand>& cmds, std::int64_t offset_ns);

}  // namespace xray::align
