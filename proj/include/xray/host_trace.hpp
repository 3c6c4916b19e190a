#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xray/model.hpp"

namespace xray::host {

enum class LineKind { SyscallAnchor, FuncEntry, FuncLeaf, FuncExit };

struct HostTraceLine {
  LineKind kind = LineKind::FuncEntry;
  std::optional<std::string> name;        // absent on FuncExit
  std::optional<std::int64_t> duration_ns;  // FuncLeaf, FuncExit
  std::optional<std::int64_t> epoch_ns;     // SyscallAnchor
  std::uint32_t depth = 0;                  // indent level; 0 for anchors
  std::size_t line = 0;

  friend bool operator==(const HostTraceLine&, const HostTraceLine&) = default;
};

struct Warning {
  std::size_t line = 0;
  std::string message;
};

struct HostTrace {
  std::vector<HostEvent> events;
  std::vector<Warning> warnings;
};

// Syntax only: `S <name>@<epoch_ns>`, `K <indent><name>() {`,
// `K <indent><name>(); <duration_ns>`, `K <indent>} <duration_ns>`, `#` comments.
std::vector<HostTraceLine> parse_host_lines(std::istream& in, const std::string& source = "<host-trace>");
std::vector<HostTraceLine> parse_host_lines(std::string_view text, const std::string& source = "<host-trace>");

// Assigns epochs: a function enters at the anchor epoch plus every duration
// completed before it in the anchor's scope, and exits `duration` later.
// Frames left open at the next anchor or at end of input are closed and
// reported as warnings.
HostTrace reconstruct_epochs(const std::vector<HostTraceLine>& lines, const std::string& source = "<host-trace>");

HostTrace parse_host_trace(std::istream& in, const std::string& source = "<host-trace>");
HostTrace parse_host_trace(std::string_view text, const std::string& source = "<host-trace>");

// Renders a line back into the text format.
std::string format_line(const HostTraceLine& line);

}  // namespace xray::host
