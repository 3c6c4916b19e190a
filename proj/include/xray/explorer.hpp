#pragma once

#include <vector>

#include "xray/model.hpp"

namespace xray::explorer {

// Builds the correlation tree. Syscall and function nodes follow the
// invocation structure of `host`; each command becomes a leaf under the
// deepest host node whose interval contains its timestamp. Commands outside
// every syscall are attached to the nearest preceding syscall (the first one
// if none precedes) and listed in meta.unanchored; commands that land between
// sibling function intervals are listed in meta.gap_attached.
//
// `cmds` must already be time-aligned. Throws Error(Validation) when host
// events are not well-nested, or when there are commands but no syscalls.
CorrelationTree build_tree(const std::vector<HostEvent>& host, const std::vector<DeviceCommand>& cmds,
                           TreeMeta meta = {});

}  // namespace xray::explorer
